use std::path::Path;
use std::process::{Command, Output};

fn nucseg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nucseg")).args(args).current_dir(cwd).output().expect("run nucseg")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn synth_segment_evaluate_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = nucseg(&["synth", "--seed", "3", "--count", "20", "--out-dir", "data"], d);
    assert!(o.status.success(), "{o:?}");
    assert!(d.join("data/synth_0003.png").exists() && d.join("data/synth_0003_gt.png").exists());

    let o = nucseg(&["segment", "data/synth_0003.png", "--overlay", "overlay.png", "--debug-dir", "debug"], d);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("instances="));
    for f in
        ["mask.png", "overlay.png", "debug/blocks.json", "debug/binary.png", "debug/iter_01.png", "debug/config.txt"]
    {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let blocks: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("debug/blocks.json")).unwrap()).unwrap();
    assert!(blocks.as_array().is_some_and(|a| !a.is_empty()));

    let o = nucseg(&["evaluate", "--gt", "data/synth_0003_gt.png", "--pred", "data/synth_0003_gt.png"], d);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("aji=1.0"), "{}", stdout(&o));

    let o = nucseg(
        &[
            "evaluate",
            "--gt",
            "data/synth_0003_gt.png",
            "--pred",
            "mask.png",
            "--gt",
            "data/synth_0003_gt.png",
            "--pred",
            "data/synth_0003_gt.png",
            "--csv",
            "report.csv",
        ],
        d,
    );
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(d.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "image_id,aji,gt_instances,pred_instances");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("synth_0003_gt,1,20,20"), "{}", lines[2]);
    assert!(lines[3].starts_with("mean,"));
}

#[test]
fn ablate_prints_both_channels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(nucseg(&["synth", "--seed", "8", "--count", "25", "--out-dir", "."], d).status.success());
    let o = nucseg(&["ablate", "synth_0008.png", "--gt", "synth_0008_gt.png"], d);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    let score = |mode: &str| -> f64 {
        let line = out.lines().find(|l| l.starts_with(&format!("channel={mode} "))).unwrap();
        line.split_whitespace().find_map(|t| t.strip_prefix("aji=")).unwrap().parse().unwrap()
    };
    assert!(score("P") >= score("L"), "{out}");
}

#[test]
fn energy_csv_has_a_row_per_block_and_a_mean() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(nucseg(&["synth", "--seed", "1", "--out-dir", "."], d).status.success());
    let o = nucseg(&["energy", "synth_0001.png"], d);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "x0,y0,w,h,p,q,r");
    // 256 px in 50 px blocks: 6 × 6 grid
    assert_eq!(lines.len(), 1 + 36 + 1);
    let mean: Vec<f64> = lines[37].split(',').skip(4).map(|v| v.parse().unwrap()).collect();
    assert!((mean.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(mean[0] > mean[1] && mean[1] >= mean[2]);
}

#[test]
fn xml_ground_truth_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("gt.xml"),
        r#"<Annotations><Annotation><Regions><Region><Vertices>
        <Vertex X="2" Y="2"/><Vertex X="8" Y="2"/><Vertex X="8" Y="8"/><Vertex X="2" Y="8"/>
        </Vertices></Region></Regions></Annotation></Annotations>"#,
    )
    .unwrap();
    let raw: Vec<u16> =
        (0..100).map(|i| ((2..8).contains(&(i % 10)) && (2..8).contains(&(i / 10))) as u16 * 7).collect();
    let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> = image::ImageBuffer::from_raw(10, 10, raw).unwrap();
    image::DynamicImage::ImageLuma16(buf).save(d.join("pred.png")).unwrap();
    let o = nucseg(&["evaluate", "--gt", "gt.xml", "--pred", "pred.png"], d);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("aji=1.0"), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nucseg(&["segment", "x.png", "--frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(nucseg(&["teleport"], dir.path()).status.code(), Some(2));
    assert_eq!(nucseg(&[], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = nucseg(&["segment", "missing.png"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.png"));

    std::fs::write(d.join("bad.cfg"), "solidity = 0.9\n").unwrap();
    assert!(nucseg(&["synth", "--seed", "0", "--count", "5", "--out-dir", "."], d).status.success());
    let o = nucseg(&["segment", "synth_0000.png", "--config", "bad.cfg"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"), "{o:?}");

    let o = nucseg(&["evaluate", "--gt", "a.png", "--gt", "b.png", "--pred", "a.png"], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(nucseg(&["synth", "--seed", "4", "--count", "20", "--out-dir", "."], d).status.success());
    std::fs::write(d.join("big.cfg"), "# only very large nuclei\nmin_area = 100000\n").unwrap();
    let o = nucseg(&["segment", "synth_0004.png", "--config", "big.cfg", "--out", "none.png"], d);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("instances=0 "), "{}", stdout(&o));
}
