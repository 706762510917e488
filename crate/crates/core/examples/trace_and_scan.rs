//! Statically list what a pickle would import and invoke, then check it
//! against the baseline denylist. The pathlib payload slips past the list.

use pickleward::corpus::default_corpus_dir;
use pickleward::opcode::parse;
use pickleward::tracer::{scan_report, trace, Denylist};

fn main() {
    let denylist = Denylist::baseline();
    for file in ["malicious/os_system.pkl", "bypass/pathlib_write.pkl"] {
        let raw = std::fs::read(default_corpus_dir().join(file)).expect("corpus pickle");
        let report = trace(&parse(&raw).expect("well-formed pickle"));
        println!("== {file}");
        print!("{}", report.to_text());
        println!("verdict: {:?}\n", scan_report(&report, &denylist));
    }
}
