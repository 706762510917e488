//! Print the opcode listing of a corpus pickle.

use pickleward::corpus::default_corpus_dir;
use pickleward::opcode::{disassemble, parse};

fn main() {
    let path = default_corpus_dir().join("malicious/os_system.pkl");
    let raw = std::fs::read(&path).expect("corpus pickle");
    let stream = parse(&raw).expect("well-formed pickle");
    println!("protocol {}, {} opcodes", stream.protocol, stream.opcodes.len());
    print!("{}", disassemble(&stream));
}
