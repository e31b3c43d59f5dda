use std::process::{Command, Output};

fn memcam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memcam")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn step_lines(program: &str) -> Vec<usize> {
    let o = memcam(&["trace", program]);
    assert_eq!(o.status.code(), Some(0));
    let mut steps: Vec<usize> = stdout(&o)
        .lines()
        .filter_map(|l| l.strip_prefix("step="))
        .map(|l| l.split(' ').next().unwrap().parse().unwrap())
        .collect();
    steps.dedup();
    steps
}

#[test]
fn verify_passes() {
    let o = memcam(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().filter(|l| l.starts_with("PASS ")).count() >= 8);
    assert!(!out.contains("FAIL"));
}

#[test]
fn mutated_program_fails_verify() {
    for m in ["tcam-compare:drop=4", "cam-compare:drop=7", "combine-round:drop=2"] {
        let o = memcam(&["verify", "--mutate", m]);
        assert_eq!(o.status.code(), Some(1), "{m}");
        assert!(stdout(&o).contains("FAIL"), "{m}");
    }
    assert_eq!(memcam(&["verify", "--mutate", "tcam-compare:drop=99"]).status.code(), Some(2));
    assert_eq!(memcam(&["verify", "--mutate", "bogus"]).status.code(), Some(2));
}

#[test]
fn trace_step_counts() {
    assert_eq!(step_lines("tcam-compare"), (1..=11).collect::<Vec<_>>());
    assert_eq!(step_lines("cam-compare"), (1..=8).collect::<Vec<_>>());
    let combine = step_lines("combine-round");
    assert!(!combine.is_empty() && combine.len() <= 10);
    assert_eq!(memcam(&["trace", "nope"]).status.code(), Some(2));
}

#[test]
fn trace_line_format() {
    let out = stdout(&memcam(&["trace", "cam-compare"]));
    let first = out.lines().find(|l| l.starts_with("step=")).unwrap();
    let fields: Vec<&str> = first.split(' ').collect();
    assert_eq!(fields.len(), 5);
    for (f, key) in fields.iter().zip(["step=", "op=", "src=", "dst=", "rows="]) {
        assert!(f.starts_with(key), "{first}");
    }
}

#[test]
fn bench_is_deterministic() {
    let args = ["bench", "--seed", "9", "--set", "bench.n_keys=2000", "--set", "bench.ops=1500", "--set", "index.level_u=4"];
    let a = memcam(&args);
    let b = memcam(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let out = stdout(&a);
    let mut lines = out.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("structure,seed,n_keys,ops,"));
    assert!(header.ends_with(",oracle_match"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("ttree-cam,9,2000,1500,"));
    assert!(row.ends_with(",true"));
    let other = memcam(&["bench", "--seed", "10", "--set", "bench.n_keys=2000", "--set", "bench.ops=1500", "--set", "index.level_u=4"]);
    assert_ne!(other.stdout, a.stdout);
}

#[test]
fn bench_every_structure() {
    for kind in ["hash-cam", "ttree-cam", "tb-tree", "tb-tree-cam"] {
        let set = format!("index.kind={kind}");
        let o = memcam(&["bench", "--set", &set, "--set", "bench.n_keys=1000", "--set", "bench.ops=800", "--set", "index.b=8"]);
        assert_eq!(o.status.code(), Some(0), "{kind}");
        let out = stdout(&o);
        let row = out.lines().nth(1).unwrap();
        assert!(row.starts_with(kind) && row.ends_with(",true"), "{row}");
    }
}

#[test]
fn bad_config_exits_2() {
    assert_eq!(memcam(&["bench", "--set", "index.kind=btree"]).status.code(), Some(2));
    assert_eq!(memcam(&["bench", "--set", "index.no_such_key=1"]).status.code(), Some(2));
    assert_eq!(memcam(&["bench", "--set", "missing-equals"]).status.code(), Some(2));
    assert_eq!(memcam(&["bench", "--config", "/nonexistent/memcam.toml"]).status.code(), Some(2));
    assert_eq!(memcam(&["frobnicate"]).status.code(), Some(2));
    let o = memcam(&["sweep", "--set", "grid.structures=[\"b-tree\"]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn single_point_sweep() {
    let o = memcam(&[
        "sweep",
        "--set",
        "grid.n_records=[1e9]",
        "--set",
        "grid.t_access_ns=[10]",
        "--set",
        "grid.structures=[\"ttree-cam\"]",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "structure,n_records,t_access_ns,k_bits,avg_time_ns,lifetime_years");
    assert!(lines[1].starts_with("ttree-cam,"));
}

#[test]
fn config_file_and_out_flag() {
    let dir = std::env::temp_dir().join(format!("memcam-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("sweep.toml");
    std::fs::write(&cfg, "[grid]\nn_records = [1e9, 1e12]\nt_access_ns = [10, 60]\nstructures = [\"hash-cam\", \"tb-tree\"]\n").unwrap();
    let out = dir.join("sweep.csv");
    let o = memcam(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);
    std::fs::remove_dir_all(&dir).ok();
}
