use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sidx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sidx")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sidx(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    sidx(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Setup {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Setup {
    fn new(count: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let c = count.to_string();
        ok(&["generate", "--output", s(&root.join("data.bin")), "--count", &c, "--length", "64", "--seed", "3"]);
        ok(&["generate", "--output", s(&root.join("q.bin")), "--count", "4", "--length", "64", "--seed", "3", "--queries"]);
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn build(&self, name: &str, th: &str) {
        ok(&[
            "build", "--dataset", s(&self.p("data.bin")), "--index", s(&self.p(name)),
            "--length", "64", "--width", "8", "--threshold", th,
        ]);
    }
}

#[test]
fn threshold_sized_dataset_is_one_full_leaf() {
    let st = Setup::new(500);
    st.build("idx", "500");
    let out = ok(&["stats", "--index", s(&st.p("idx"))]);
    assert!(out.contains("leaves       1\n"), "{out}");
    assert!(out.contains("fill factor  1.000\n"), "{out}");
}

#[test]
fn exact_agrees_with_brute_force_command() {
    let st = Setup::new(2000);
    st.build("idx", "60");
    let (idx, q, data) = (st.p("idx"), st.p("q.bin"), st.p("data.bin"));
    for dist in [&["--distance", "ed"][..], &["--distance", "dtw", "--window", "6"][..]] {
        let mut exact = vec!["exact", "--index", s(&idx), "--queries", s(&q), "-k", "7"];
        exact.extend_from_slice(dist);
        let mut brute = vec![
            "brute", "--dataset", s(&data), "--queries", s(&q), "--length", "64", "-k", "7",
        ];
        brute.extend_from_slice(dist);
        let e = ok(&exact);
        assert_eq!(e.lines().count(), 28);
        assert_eq!(e, ok(&brute));
    }
}

#[test]
fn full_budget_query_matches_exact() {
    let st = Setup::new(1500);
    st.build("idx", "60");
    let idx = st.p("idx");
    let q = st.p("q.bin");
    let approx = ok(&["query", "--index", s(&idx), "--queries", s(&q), "-k", "5", "--nodes", "100000"]);
    let exact = ok(&["exact", "--index", s(&idx), "--queries", s(&q), "-k", "5"]);
    assert_eq!(approx, exact);
}

#[test]
fn same_seed_same_bytes() {
    let st = Setup::new(800);
    ok(&["generate", "--output", s(&st.p("again.bin")), "--count", "800", "--length", "64", "--seed", "3"]);
    assert_eq!(fs::read(st.p("data.bin")).unwrap(), fs::read(st.p("again.bin")).unwrap());
    st.build("a", "40");
    st.build("b", "40");
    let names = |d: &Path| {
        let mut v: Vec<_> = fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    assert_eq!(names(&st.p("a")), names(&st.p("b")));
    for f in names(&st.p("a")) {
        assert_eq!(fs::read(st.p("a").join(&f)).unwrap(), fs::read(st.p("b").join(&f)).unwrap(), "{f:?}");
    }
}

#[test]
fn insert_then_delete_by_value() {
    let st = Setup::new(1000);
    st.build("idx", "50");
    let idx = st.p("idx");
    let q = st.p("q.bin");
    let ords: Vec<u64> = ok(&["insert", "--index", s(&idx), "--series", s(&q)])
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(ords, vec![1000, 1001, 1002, 1003]);
    let exact = ok(&["exact", "--index", s(&idx), "--queries", s(&q), "-k", "1"]);
    for (i, line) in exact.lines().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[2], (1000 + i).to_string());
        assert_eq!(cols[3].parse::<f64>().unwrap(), 0.0);
    }
    let deleted = ok(&["delete", "--index", s(&idx), "--series", s(&q)]);
    assert_eq!(deleted, "1000\n1001\n1002\n1003\n");
    let exact = ok(&["exact", "--index", s(&idx), "--queries", s(&q), "-k", "1"]);
    for line in exact.lines() {
        let ord: u64 = line.split('\t').nth(2).unwrap().parse().unwrap();
        assert!(ord < 1000);
    }
    ok(&["delete", "--index", s(&idx), "--ordinal", "3,4"]);
    assert!(ok(&["stats", "--index", s(&idx)]).contains("series       998\n"));
}

#[test]
fn failures_have_distinct_statuses() {
    let st = Setup::new(300);
    st.build("idx", "50");
    let idx = st.p("idx");
    assert_eq!(code(&["stats", "--index", s(&idx), "--no-such-flag"]), 2);
    assert_eq!(
        code(&["build", "--dataset", s(&st.p("data.bin")), "--index", s(&st.p("x")), "--length", "64", "--width", "7"]),
        3
    );
    assert_eq!(code(&["stats", "--index", s(&st.p("missing"))]), 4);
    assert_eq!(code(&["delete", "--index", s(&idx), "--ordinal", "999999"]), 6);
    let file = idx.join("index.bin");
    let mut bytes = fs::read(&file).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&file, bytes).unwrap();
    let out = sidx(&["stats", "--index", s(&idx)]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}
