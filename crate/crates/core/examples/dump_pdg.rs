//! Prints the PDG-JSON of every function in a mini-C file.
use std::env;
use std::fs;

fn main() {
    let path = env::args().nth(1).expect("usage: dump_pdg FILE.c");
    let src = fs::read_to_string(path).expect("readable file");
    for g in pdgvd::frontend::parse_source(&src).expect("valid mini-C") {
        print!("{}", pdgvd::frontend::export_pdg_json(&g));
    }
}
