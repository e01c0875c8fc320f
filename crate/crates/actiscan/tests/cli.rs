use std::path::Path;
use std::process::{Command, Output};

fn actiscan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actiscan"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL: &str = r#"
seed = 5
noise = ["none", "L2"]
[geometry]
size = 24
num_angles = 36
[metrics]
rs_seeds = 2
[recon]
sart_iterations = 5
[[phantoms]]
kind = "shepp_logan_family"
count = 2
[[policies]]
kind = "US"
k_max = 8
[[policies]]
kind = "RS"
k_max = 8
[[policies]]
kind = "SAS"
k0 = 3
k_max = 8
scorer = "oracle"
[[policies]]
kind = "GDS"
k0 = 3
k_max = 8
scorer = "constant"
"#;

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), read(&p)));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn compare_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let a = actiscan(dir.path(), &["--config", "c.toml", "--out", "a", "--threads", "1", "compare"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = actiscan(dir.path(), &["--config", "c.toml", "--out", "b", "--threads", "3", "compare"]);
    assert_eq!(code(&b), 0);
    let (ta, tb) = (tree(&dir.path().join("a")), tree(&dir.path().join("b")));
    assert_eq!(ta.len(), 3 + 2 * 4 * 2 * 3);
    assert!(ta == tb, "outputs differ between thread counts");

    let cells = String::from_utf8(read(&dir.path().join("a/cells.csv"))).unwrap();
    assert!(cells.starts_with(
        "phantom,policy,noise,psnr,ssim,rmse,roi_psnr,roi_ssim,roi_rmse,wall_ms,status\n"
    ));
    assert_eq!(cells.lines().count(), 1 + 16);
    assert!(cells.lines().skip(1).all(|l| l.ends_with(",0.0,ok")));

    // a different seed changes the noisy and random cells
    let c = actiscan(dir.path(), &["--config", "c.toml", "--out", "c", "--seed", "6", "compare"]);
    assert_eq!(code(&c), 0);
    assert_ne!(read(&dir.path().join("a/cells.csv")), read(&dir.path().join("c/cells.csv")));
}

#[test]
fn empty_policy_list_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "policies = []\n[geometry]\nsize = 16\nnum_angles = 12\n").unwrap();
    let o = actiscan(dir.path(), &["--config", "c.toml", "--out", "o", "compare"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cells = String::from_utf8(read(&dir.path().join("o/cells.csv"))).unwrap();
    assert_eq!(cells, "phantom,policy,noise,psnr,ssim,rmse,roi_psnr,roi_ssim,roi_rmse,wall_ms,status\n");
    let summary = String::from_utf8(read(&dir.path().join("o/summary.csv"))).unwrap();
    assert_eq!(summary.lines().count(), 1);
}

#[test]
fn failing_cells_give_exit_one_and_keep_going() {
    let dir = tempfile::tempdir().unwrap();
    // a photon count beyond the Poisson sampler's range fails only that noise level
    let cfg = "noise = [1e30, \"none\"]\n[geometry]\nsize = 16\nnum_angles = 12\n\
               [[phantoms]]\nkind = \"shepp_logan\"\n\
               [[policies]]\nkind = \"US\"\nk_max = 3\n";
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = actiscan(dir.path(), &["--config", "c.toml", "--out", "o", "compare"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let cells = String::from_utf8(read(&dir.path().join("o/cells.csv"))).unwrap();
    let rows: Vec<&str> = cells.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("shepp_logan,US,1000000000000000000000000000000,nan"), "{}", rows[0]);
    assert!(rows[0].ends_with("failed"));
    assert!(rows[1].ends_with(",ok"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "unknown_key = true\n").unwrap();
    let o = actiscan(dir.path(), &["--config", "bad.toml", "compare"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));

    std::fs::write(dir.path().join("win.toml"), "[[policies]]\nkind = \"SAS\"\nwindow = [50.0, 120.0]\nscorer = \"oracle\"\n").unwrap();
    assert_eq!(code(&actiscan(dir.path(), &["--config", "win.toml", "compare"])), 2);

    assert_eq!(code(&actiscan(dir.path(), &["no-such-command"])), 2);
    assert_eq!(code(&actiscan(dir.path(), &["run-policy", "--policy", "XYZ"])), 2);
    // a missing input file is not a configuration problem
    let o = actiscan(dir.path(), &["reconstruct", "--sinogram", "missing.raw", "--output", "x.raw"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn scan_reconstruct_and_single_episode() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[geometry]\nsize = 24\nnum_angles = 30\n[[phantoms]]\nkind = \"shepp_logan\"\n",
    )
    .unwrap();
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "c.toml", "--out", "o"];
        full.extend_from_slice(args);
        let o = actiscan(dir.path(), &full);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    run(&["phantom"]);
    assert!(dir.path().join("o/phantoms/shepp_logan.pgm").exists());
    run(&["scan", "--image", "o/phantoms/shepp_logan.raw", "--output", "s.raw", "--noise", "L1"]);
    for m in ["fbp", "sart"] {
        let out = format!("r_{m}.raw");
        run(&["reconstruct", "--sinogram", "s.raw", "--output", &out, "--method", m]);
        let img = actiscan::io::read_image_raw(&dir.path().join(&out)).unwrap();
        assert_eq!(img.dims(), (24, 24));
    }
    let o = run(&["run-policy", "--policy", "SAS", "--scorer", "oracle"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("psnr"));
    let trace = String::from_utf8(read(&dir.path().join("o/shepp_logan__SAS__none.csv"))).unwrap();
    assert_eq!(trace.lines().count(), 1 + 15);
}

#[test]
fn train_writes_checkpoint_usable_by_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[geometry]\nsize = 16\nnum_angles = 24\n\
               [recon]\nsart_iterations = 3\n\
               [train]\nepochs = 2\n\
               [train.policy]\nkind = \"SAS\"\nk0 = 3\nk_max = 5\nwindow = [2.0, 30.0]\n\
               [[phantoms]]\nkind = \"shepp_logan_family\"\ncount = 2\n";
    std::fs::write(dir.path().join("t.toml"), cfg).unwrap();
    let o = actiscan(dir.path(), &["--config", "t.toml", "--out", "m", "train"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = String::from_utf8(read(&dir.path().join("m/train_log.csv"))).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,phase,mean_loss,wall_ms");
    assert!(lines[1].starts_with("0,R,") && lines[2].starts_with("1,A,"));

    let cfg2 = format!(
        "model = \"m/model.ckpt\"\n{cfg}[[policies]]\nkind = \"SAS\"\nk0 = 3\nk_max = 5\n"
    );
    std::fs::write(dir.path().join("c.toml"), cfg2).unwrap();
    let o = actiscan(dir.path(), &["--config", "c.toml", "--out", "r", "compare"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = actiscan(dir.path(), &["gradcheck", "--seed", "2"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() >= 8 && text.lines().all(|l| l.starts_with("ok")), "{text}");
}
