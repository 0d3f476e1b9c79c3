use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use cipherface_core::dataset::{write_vector_csv, Dataset, ImageVector, Sample};
use cipherface_core::model_io::load_quantized;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cipherface"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three classes of 4x4 images around distinct intensity patterns.
fn toy() -> Dataset {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut noise = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % 40) as u8
    };
    let mut samples = Vec::new();
    for label in 0..3 {
        for _ in 0..4 {
            let pixels = (0..16u8)
                .map(|j| {
                    let base: u8 = if j % 3 == label as u8 { 190 } else { 50 };
                    base + noise()
                })
                .collect();
            samples.push(Sample {
                image: ImageVector::new(pixels),
                label,
                subject: None,
            });
        }
    }
    Dataset::new(vec!["DI".into(), "FE".into(), "HA".into()], samples).unwrap()
}

fn write_image(dir: &Path, name: &str, image: &ImageVector) -> PathBuf {
    let p = dir.join(name);
    let text: Vec<String> = image.pixels().iter().map(u8::to_string).collect();
    std::fs::write(&p, text.join(",")).unwrap();
    p
}

struct Setup {
    dir: tempfile::TempDir,
    data: Dataset,
}

impl Setup {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = toy();
        std::fs::write(dir.path().join("data.csv"), write_vector_csv(&data)).unwrap();
        Setup { dir, data }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train_and_quantize(&self) {
        let o = run(&["train", "--data", path(&self.p("data.csv")), "--out", path(&self.p("model.json"))]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = run(&[
            "quantize",
            "--model",
            path(&self.p("model.json")),
            "--scale",
            "1000",
            "--out",
            path(&self.p("q.json")),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn classify_plain_returns_training_label() {
    let s = Setup::new();
    s.train_and_quantize();
    for (i, sample) in s.data.samples().iter().enumerate() {
        let img = write_image(s.dir.path(), &format!("img{i}.txt"), &sample.image);
        let expected = &s.data.label_names()[sample.label];
        for model in ["model.json", "q.json"] {
            let o = run(&["classify-plain", "--model", path(&s.p(model)), "--image", path(&img)]);
            assert_eq!(o.status.code(), Some(0));
            assert_eq!(&stdout(&o), expected);
        }
    }
}

#[test]
fn missing_model_is_a_usage_error() {
    let o = run(&["classify-plain", "--image", "x.txt"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["serve", "--listen", "127.0.0.1:0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn error_classes_have_distinct_codes() {
    let s = Setup::new();
    let o = run(&["quantize", "--model", path(&s.p("absent.json")), "--scale", "10", "--out", "q.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[3]"));

    std::fs::write(s.p("bad.csv"), "label,a,b\nx,1\n").unwrap();
    let o = run(&["train", "--data", path(&s.p("bad.csv")), "--out", path(&s.p("m.json"))]);
    assert_eq!(o.status.code(), Some(4));

    std::fs::write(s.p("v99.json"), r#"{"format":"cipherface-trained","version":99}"#).unwrap();
    let o = run(&["quantize", "--model", path(&s.p("v99.json")), "--scale", "10", "--out", "q.json"]);
    assert_eq!(o.status.code(), Some(5));

    std::fs::write(s.p("one.csv"), "label,a,b\nx,1,2\nx,3,4\ny,9,9\n").unwrap();
    let o = run(&["train", "--data", path(&s.p("one.csv")), "--out", path(&s.p("m.json"))]);
    assert_eq!(o.status.code(), Some(6));

    s.train_and_quantize();
    let o = run(&["quantize", "--model", path(&s.p("model.json")), "--scale", "0", "--out", "q0.json"]);
    assert_eq!(o.status.code(), Some(7));

    let o = run(&["keygen", "--bits", "16", "--public", path(&s.p("a")), "--private", path(&s.p("b"))]);
    assert_eq!(o.status.code(), Some(8));
}

#[test]
fn serve_and_classify_encrypted_over_tcp() {
    let s = Setup::new();
    s.train_and_quantize();
    let o = run(&[
        "--seed",
        "5",
        "keygen",
        "--bits",
        "512",
        "--public",
        path(&s.p("pk.json")),
        "--private",
        path(&s.p("sk.json")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let q = load_quantized(&s.p("q.json")).unwrap();
    let picks = [0usize, 5, 10];
    let mut server = bin()
        .args([
            "--seed",
            "9",
            "serve",
            "--model",
            path(&s.p("q.json")),
            "--listen",
            "127.0.0.1:0",
            "--max-sessions",
            &picks.len().to_string(),
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();

    for &i in &picks {
        let image = &s.data.samples()[i].image;
        let img = write_image(s.dir.path(), &format!("e{i}.txt"), image);
        let o = run(&[
            "--seed",
            &i.to_string(),
            "classify-encrypted",
            "--connect",
            &addr,
            "--key",
            path(&s.p("sk.json")),
            "--image",
            path(&img),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let expected = &q.label_names[q.classify(image).unwrap().label];
        assert_eq!(&stdout(&o), expected);
    }
    assert!(server.wait().unwrap().success());
}

#[test]
fn eval_writes_identical_reports_for_a_seed() {
    let s = Setup::new();
    let args = |out: &str| {
        vec![
            "--seed".to_string(),
            "3".into(),
            "eval".into(),
            "--out".into(),
            path(&s.p(out)).to_string(),
            "--side".into(),
            "5".into(),
            "--subsets".into(),
            "2".into(),
            "--pool-per-class".into(),
            "8".into(),
            "--subset-per-class".into(),
            "6".into(),
            "--scales".into(),
            "1,100".into(),
            "--encrypted-samples".into(),
            "1".into(),
            "--key-bits".into(),
            "256".into(),
            "--kappa".into(),
            "20".into(),
        ]
    };
    for out in ["a", "b"] {
        let o = bin().args(args(out)).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["confusion_subset_01.csv", "confusion_subset_02.csv", "confusion_average.csv", "sweep.csv"] {
        let a = std::fs::read(s.p("a").join(name)).unwrap();
        let b = std::fs::read(s.p("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let sweep = std::fs::read_to_string(s.p("a").join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("scale,quantized_plain_acc,encrypted_acc,plain_acc\n"));
}
