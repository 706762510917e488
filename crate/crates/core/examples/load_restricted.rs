//! Load a benign model and a malicious pickle under the same hand-built
//! policy. The benign one loads; the malicious one is stopped.

use pickleward::corpus::default_corpus_dir;
use pickleward::policy::Policy;
use pickleward::vm::{execute_bytes, VmConfig};

fn main() {
    let policy = Policy::from_sets(
        ["toylib.Model", "toylib.Tensor", "toylib.read_weights_to_tensor", "toylib.config.ModelConfig", "toylib.layers.Linear"]
            .map(pickleward::name::qn),
        [pickleward::name::qn("toylib.read_weights_to_tensor")],
    )
    .expect("invocations are a subset of imports");
    let config = VmConfig::restricted(&policy);

    for file in ["benign/toylib_model.pkl", "malicious/os_system.pkl"] {
        let raw = std::fs::read(default_corpus_dir().join(file)).expect("corpus pickle");
        match execute_bytes(&raw, &config) {
            Ok(outcome) => println!("{file}: loaded\n{}", outcome.canonical_dump()),
            Err(e) => println!("{file}: rejected: {e}"),
        }
    }
}
