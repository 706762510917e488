//! Exit codes and outputs of the command-line tool.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pickleward::corpus::default_corpus_dir;
use pickleward::policy::{read_policy, validate};

fn pickleward(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pickleward"))
        .current_dir(dir)
        .args(args)
        .env_remove("PICKLEWARD_CACHE")
        .output()
        .expect("binary runs")
}

fn corpus(rel: &str) -> String {
    default_corpus_dir().join(rel).to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A temporary directory with `toy.json` generated for toylib.
fn with_toy_policy() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let lib = corpus("libs/toylib");
    let o = pickleward(dir.path(), &["gen-policy", "--library", &lib, "--package", "toylib", "--class", "toylib.Model", "-o", "toy.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let path = dir.path().join("toy.json");
    (dir, path)
}

#[test]
fn generated_policy_validates() {
    let (_dir, path) = with_toy_policy();
    let p = read_policy(&path).unwrap();
    assert!(validate(&p).is_ok());
    assert!(p.allows_invocation("toylib.read_weights_to_tensor"));
}

#[test]
fn malicious_load_exits_4_naming_callee_and_offset() {
    let (dir, _) = with_toy_policy();
    let o = pickleward(dir.path(), &["load", &corpus("malicious/os_system.pkl"), "--policy", "toy.json"]);
    assert_eq!(code(&o), 4);
    let err = stderr(&o);
    assert!(err.contains("os.system") && err.contains("offset 45"), "{err}");
}

#[test]
fn benign_load_dump_matches_oracle_and_plain_load_writes_nothing() {
    let (dir, _) = with_toy_policy();
    let o = pickleward(dir.path(), &["load", &corpus("benign/toylib_tensor.pkl"), "--policy", "toy.json", "--dump", "out.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dump = std::fs::read_to_string(dir.path().join("out.txt")).unwrap();
    assert_eq!(dump, std::fs::read_to_string(corpus("oracle/benign_tensor.dump")).unwrap());

    let before: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    let o = pickleward(dir.path(), &["load", &corpus("benign/toylib_model.pkl"), "--policy", "toy.json"]);
    assert_eq!(code(&o), 0);
    let after: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(before.len(), after.len());
}

#[test]
fn strict_load_exits_5_on_stubs() {
    let dir = tempfile::tempdir().unwrap();
    let lib = corpus("libs/flairlike");
    let o = pickleward(
        dir.path(),
        &["gen-policy", "--library", &lib, "--package", "flairlike", "--class", "flairlike.models.SequenceTagger", "-o", "p.json"],
    );
    assert_eq!(code(&o), 0);
    let file = corpus("benign/flairlike_tagger_metadata.pt");
    assert_eq!(code(&pickleward(dir.path(), &["load", &file, "--policy", "p.json"])), 0);
    let o = pickleward(dir.path(), &["load", &file, "--policy", "p.json", "--strict"]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("torch.optim.sgd.SGD"));
}

#[test]
fn scan_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pickleward(dir.path(), &["scan", &corpus("malicious/os_system.pkl")])), 3);
    assert_eq!(code(&pickleward(dir.path(), &["scan", &corpus("bypass/pathlib_write.pkl")])), 0);
    let o = pickleward(dir.path(), &["scan", &corpus("bypass/pathlib_write.pkl"), &corpus("malicious/os_system.pkl")]);
    assert_eq!(code(&o), 3);
    let out = stdout(&o);
    assert!(out.find("pathlib_write").unwrap() < out.find("os_system").unwrap(), "{out}");
}

#[test]
fn trace_disassemble_explain_and_bench() {
    let (dir, _) = with_toy_policy();
    let model = corpus("benign/toylib_model.pkl");
    let o = pickleward(dir.path(), &["trace", &model, "--format", "structured"]);
    assert_eq!(code(&o), 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["schema"], "pickleward-trace/1");

    let o = pickleward(dir.path(), &["disassemble", &corpus("malicious/os_system.pkl")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("45: REDUCE"));

    let o = pickleward(dir.path(), &["explain", "--policy", "toy.json", "--name", "toylib.read_weights_to_tensor"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).trim_end().ends_with("rule 1: __reduce__ return)"), "{}", stdout(&o));

    let o = pickleward(dir.path(), &["bench", &model, "--policy", "toy.json", "--iterations", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("overhead:"));
}

#[test]
fn usage_parse_and_io_errors_exit_2() {
    let (dir, _) = with_toy_policy();
    assert_eq!(code(&pickleward(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&pickleward(dir.path(), &["load", "missing.pkl", "--policy", "toy.json"])), 2);
    std::fs::write(dir.path().join("junk.pkl"), b"\x80\x05N").unwrap();
    assert_eq!(code(&pickleward(dir.path(), &["disassemble", "junk.pkl"])), 2);
    assert_eq!(code(&pickleward(dir.path(), &["explain", "--policy", "toy.json", "--name", "os.system"])), 2);
}
