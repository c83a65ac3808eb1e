use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use num_complex::Complex64;
use taskimg::io::{read_tensor, write_tensor};
use taskimg::ComplexTensor3;

fn taskimg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskimg"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn p(&self, name: &str) -> String {
        self.0.path().join(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, text: &str) -> String {
        std::fs::write(self.p(name), text).unwrap();
        self.p(name)
    }
}

const SMALL_TASK2: &str =
    r#"{"task": 2, "geometry": {"preset": "task2", "nx": 16, "ny": 16, "nr": 32}, "seed": 1}"#;

#[test]
fn sparse_method_is_task_with_one_l1_override() {
    let d = Dir::new();
    let cfg = d.write("c.json", SMALL_TASK2);
    let over = d.write(
        "o.json",
        r#"{"task": 2, "geometry": {"preset": "task2", "nx": 16, "ny": 16, "nr": 32}, "seed": 1,
            "cognitions": [{"kind": "l1", "beta": 0.1, "scale": "peak"}],
            "solver": {"gamma": 1.0, "component_count": 1}}"#,
    );
    let out = taskimg(&[
        "simulate",
        "--task",
        "2",
        "--config",
        &cfg,
        "--out-echo",
        &d.p("y.rit"),
        "--out-truth",
        &d.p("t.rit"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("(16, 16, 32)") && stdout.contains("seed 1"),
        "{stdout}"
    );

    for (method, config, out) in [("sparse", &cfg, "s.rit"), ("task", &over, "t2.rit")] {
        let o = taskimg(&[
            "image",
            "--method",
            method,
            "--task",
            "2",
            "--config",
            config,
            "--echo",
            &d.p("y.rit"),
            "--out",
            &d.p(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(
        std::fs::read(d.p("s.rit")).unwrap(),
        std::fs::read(d.p("t2.rit")).unwrap()
    );
}

#[test]
fn png_export_is_reproducible() {
    let d = Dir::new();
    let img = ComplexTensor3::from_fn((4, 5, 6), |(i, j, k)| {
        Complex64::new((i + 2 * j) as f64, k as f64)
    })
    .unwrap();
    write_tensor(d.p("echo.rit"), &img).unwrap();
    let cfg = d.write(
        "c.json",
        r#"{"task": 1, "geometry": {"preset": "task1", "nx": 4, "ny": 5, "nr": 6}}"#,
    );
    let run = |out: &str| {
        let o = taskimg(&[
            "image",
            "--method",
            "mf",
            "--task",
            "1",
            "--config",
            &cfg,
            "--echo",
            &d.p("echo.rit"),
            "--out",
            &d.p(out),
            "--export-png",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("a.rit");
    run("b.rit");
    for suffix in ["_mip_x.png", "_mip_y.png", "_mip_z.png", "_mip.csv"] {
        let a = std::fs::read(d.p(&format!("a{suffix}"))).unwrap();
        assert_eq!(
            a,
            std::fs::read(d.p(&format!("b{suffix}"))).unwrap(),
            "{suffix}"
        );
    }
    // sidecars differ only in the file names they list
    let a = std::fs::read_to_string(d.p("a_mip.json")).unwrap();
    assert_eq!(
        a.replace("\"a_", "\"b_"),
        std::fs::read_to_string(d.p("b_mip.json")).unwrap()
    );

    let out = read_tensor(d.p("a.rit")).unwrap();
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.p("a_mip.json")).unwrap()).unwrap();
    assert_eq!(sidecar["global_max"].as_f64().unwrap(), out.max_abs());
    let z = image::open(d.p("a_mip_z.png")).unwrap().to_luma8();
    assert_eq!(z.dimensions(), (5, 4));
    assert_eq!(z.pixels().map(|p| p.0[0]).max(), Some(255));

    let csv = std::fs::read_to_string(d.p("a_mip.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("axis,row,col,value"));
    assert_eq!(csv.lines().count(), 1 + 5 * 6 + 4 * 6 + 4 * 5);
}

#[test]
fn task1_pipeline_end_to_end() {
    let d = Dir::new();
    let cfg = d.write("c.json", r#"{"task": 1, "seed": 2}"#);
    let start = Instant::now();
    assert_eq!(
        code(&taskimg(&[
            "simulate",
            "--task",
            "1",
            "--config",
            &cfg,
            "--out-echo",
            &d.p("y.rit"),
            "--out-truth",
            &d.p("t.rit")
        ])),
        0
    );
    assert_eq!(
        code(&taskimg(&[
            "image",
            "--method",
            "task",
            "--task",
            "1",
            "--config",
            &cfg,
            "--echo",
            &d.p("y.rit"),
            "--out",
            &d.p("x.rit")
        ])),
        0
    );
    let m = taskimg(&[
        "metrics",
        "--truth",
        &d.p("t.rit"),
        "--est",
        &d.p("x.rit"),
        "--scene",
        &d.p("y.scene.json"),
        "--config",
        &cfg,
        "--metric",
        "all",
        "--out",
        &d.p("m.json"),
    ]);
    assert_eq!(code(&m), 0, "{}", String::from_utf8_lossy(&m.stderr));
    assert!(start.elapsed().as_secs() < 60);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.p("m.json")).unwrap()).unwrap();
    assert!(report["mean_ree"].as_f64().unwrap() < 0.1);
    assert_eq!(report["ree"].as_array().unwrap().len(), 3);
    assert!(String::from_utf8_lossy(&m.stdout).contains("mean REE"));
}

#[test]
fn exit_codes() {
    let d = Dir::new();
    let bad = d.write("bad.json", r#"{"task": 1, "typo": true}"#);
    let o = taskimg(&[
        "simulate",
        "--task",
        "1",
        "--config",
        &bad,
        "--out-echo",
        &d.p("y.rit"),
        "--out-truth",
        &d.p("t.rit"),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    assert!(!Path::new(&d.p("y.rit")).exists());

    let o = taskimg(&[
        "simulate",
        "--task",
        "1",
        "--config",
        &d.p("missing.json"),
        "--out-echo",
        &d.p("y.rit"),
        "--out-truth",
        &d.p("t.rit"),
    ]);
    assert_eq!(code(&o), 3);
    let o = taskimg(&[
        "simulate",
        "--task",
        "1",
        "--out-echo",
        &d.p("no/such/dir/y.rit"),
        "--out-truth",
        &d.p("t.rit"),
    ]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&taskimg(&["simulate", "--task", "1"])), 2);
    assert_eq!(code(&taskimg(&["frobnicate"])), 2);

    std::fs::write(
        d.p("junk.rit"),
        b"XXXXnot a tensor file at all, not at all......",
    )
    .unwrap();
    let o = taskimg(&[
        "image",
        "--method",
        "mf",
        "--task",
        "1",
        "--echo",
        &d.p("junk.rit"),
        "--out",
        &d.p("o.rit"),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("magic"));

    write_tensor(d.p("a.rit"), &ComplexTensor3::zeros((2, 2, 2)).unwrap()).unwrap();
    write_tensor(d.p("b.rit"), &ComplexTensor3::zeros((2, 2, 3)).unwrap()).unwrap();
    let o = taskimg(&[
        "metrics",
        "--truth",
        &d.p("a.rit"),
        "--est",
        &d.p("b.rit"),
        "--metric",
        "ssim",
        "--out",
        &d.p("m.json"),
    ]);
    assert_eq!(code(&o), 4);
    assert!(!Path::new(&d.p("m.json")).exists());

    // an infinite echo sample drives the lp prox out of its domain
    let cfg = d.write(
        "lp.json",
        r#"{"task": 1, "geometry": {"preset": "task1", "nx": 8, "ny": 8, "nr": 16},
            "cognitions": [{"kind": "lp", "beta": 0.1, "p": 0.5}]}"#,
    );
    let mut y = ComplexTensor3::zeros((8, 8, 16)).unwrap();
    y[(0, 0, 0)] = Complex64::new(f64::INFINITY, 0.0);
    write_tensor(d.p("inf.rit"), &y).unwrap();
    let o = taskimg(&[
        "image",
        "--method",
        "task",
        "--task",
        "1",
        "--config",
        &cfg,
        "--echo",
        &d.p("inf.rit"),
        "--out",
        &d.p("o.rit"),
    ]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("iteration"));
    assert!(!Path::new(&d.p("o.rit")).exists());
}

#[test]
fn tbr_only_report_uses_inf_sentinel() {
    let d = Dir::new();
    let t = ComplexTensor3::delta((8, 8, 8), (4, 4, 4), Complex64::new(1.0, 0.0)).unwrap();
    write_tensor(d.p("t.rit"), &t).unwrap();
    let o = taskimg(&[
        "metrics",
        "--truth",
        &d.p("t.rit"),
        "--est",
        &d.p("t.rit"),
        "--metric",
        "tbr",
        "--out",
        &d.p("m.json"),
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("TBR inf dB"));
    let text = std::fs::read_to_string(d.p("m.json")).unwrap();
    let report = taskimg::metrics::MetricReport::from_json(&text).unwrap();
    assert_eq!(report.tbr_db, Some(f64::INFINITY));
    assert!(report.ssim.is_none() && report.ree.is_none());
}
