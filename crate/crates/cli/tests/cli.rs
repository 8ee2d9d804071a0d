use std::path::Path;
use std::process::{Command, Output};

fn platesize(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platesize"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PLATESIZE_OUT")
        .output()
        .expect("binary runs")
}

fn value(csv: &str, quantity: &str) -> String {
    csv.lines()
        .find_map(|l| {
            let mut parts = l.splitn(3, ',');
            let _ = parts.next()?;
            (parts.next()? == quantity).then(|| parts.next().unwrap().to_string())
        })
        .unwrap_or_else(|| panic!("{quantity} missing from\n{csv}"))
}

#[test]
fn size_without_inclusion_has_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("plain.cfg"), "target_size = 0.125\n").unwrap();
    let out = platesize(&["--config", "plain.cfg", "size"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# schema: "));
    assert_eq!(value(&text, "gap"), "0");
    assert_eq!(value(&text, "lower"), "0");
    assert_eq!(value(&text, "upper"), "0");
}

#[test]
fn unit_contrast_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("k1.cfg"),
        "target_size = 0.1\ninclusion_rect = 0.4, 0.4, 0.6, 0.6\nkappa = 1\n",
    )
    .unwrap();
    let out = platesize(&["--config", "k1.cfg", "energy-lemma"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_config_and_bad_keys_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(platesize(&["work"], dir.path()).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.cfg"), "rho0 = 1\nflavour = mint\n").unwrap();
    let out = platesize(&["--config", "bad.cfg", "work"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:2"));
    assert_eq!(platesize(&["nonsense"], dir.path()).status.code(), Some(1));
}

#[test]
fn dense_oracle_over_cap_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("big.cfg"), "target_size = 0.05\n").unwrap();
    let out = platesize(&["--config", "big.cfg", "--dense-oracle", "work"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("600"));
}

#[test]
fn energy_lemma_passes_for_stiff_inclusion() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("stiff.cfg"),
        "target_size = 0.1\ninclusion_disk = 0.5, 0.5, 0.2\nkappa = 2\nload = shear_pair q=1\n",
    )
    .unwrap();
    let out = platesize(&["--config", "stiff.cfg", "--dense-oracle", "energy-lemma"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(value(&text, "pass"), "true");
    let lhs: f64 = value(&text, "lhs").parse().unwrap();
    let mid: f64 = value(&text, "mid").parse().unwrap();
    let rhs: f64 = value(&text, "rhs").parse().unwrap();
    assert!(lhs <= mid && mid <= rhs && mid > 0.0);
}

#[test]
fn convergence_table_orders() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("conv.cfg"), "levels = 4, 8, 16, 32\n").unwrap();
    let out = platesize(&["--config", "conv.cfg", "convergence"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let last = rows.last().unwrap();
    // Bilinear deflection: energy error is first order, L2 error second order.
    assert!((last[col("energy_order")] - 1.0).abs() < 1e-6);
    assert!(last[col("l2_order")] >= 1.9);
    assert!((last[col("work")] - 5.0 / 9.0).abs() < 1e-10);
}

#[test]
fn outputs_go_to_the_out_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.cfg"), "id = plate\ntarget_size = 0.25\n").unwrap();
    let out = platesize(&["--config", "s.cfg", "--out", "results", "solve"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let state = std::fs::read_to_string(dir.path().join("results/plate-state.csv")).unwrap();
    assert_eq!(state.lines().nth(1), Some("node_id,x,y,phi1,phi2,w"));
    assert_eq!(state.lines().count(), 2 + 25);
    let env = Command::new(env!("CARGO_BIN_EXE_platesize"))
        .args(["--config", "s.cfg", "work"])
        .current_dir(dir.path())
        .env("PLATESIZE_OUT", "from-env")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(0));
    assert!(dir.path().join("from-env/plate-work.csv").exists());
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("d.cfg"),
        "target_size = 0.1\ninclusion_rect = 0.3, 0.3, 0.6, 0.5\nkappa = 3\nload = twist a=1\n",
    )
    .unwrap();
    let a = platesize(&["--config", "d.cfg", "--jobs", "1", "size"], dir.path());
    let b = platesize(&["--config", "d.cfg", "--jobs", "4", "size"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn calibrate_brackets_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for (i, r) in [0.1, 0.15, 0.2].iter().enumerate() {
        std::fs::write(
            corpus.join(format!("disk{i}.cfg")),
            format!("target_size = 0.05\ninclusion_disk = 0.5, 0.5, {r}\nkappa = 2\n"),
        )
        .unwrap();
    }
    let out = platesize(&["--out", "res", "calibrate", "corpus"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("res/corpus.csv")).unwrap();
    let mut lines = table.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("id,area,W0,W,gap,lower,upper,fatness,F,lemma_pass"));
    let mut n = 0;
    for l in lines {
        let v: Vec<&str> = l.split(',').collect();
        let area: f64 = v[1].parse().unwrap();
        let lower: f64 = v[5].parse().unwrap();
        let upper: f64 = v[6].parse().unwrap();
        assert!(lower <= area * (1.0 + 1e-12) && area <= upper * (1.0 + 1e-12));
        assert_eq!(v[9], "true");
        n += 1;
    }
    assert_eq!(n, 3);
    let cal = std::fs::read_to_string(dir.path().join("res/calibration.csv")).unwrap();
    assert!(value(&cal, "C2_over_C1").parse::<f64>().unwrap() >= 0.0);
}
