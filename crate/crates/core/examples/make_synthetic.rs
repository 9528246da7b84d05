//! Writes a synthetic corpus as JSONL.
//!
//! cargo run --example make_synthetic -- markov 10 out.jsonl
//! cargo run --example make_synthetic -- disjoint 10 out.jsonl

use std::fs::File;
use std::io::BufWriter;

use authorship::corpus::write_corpus;
use authorship::synth::{disjoint_alphabet_corpus, markov_style_corpus, DisjointConfig, MarkovConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() != 3 {
        eprintln!("usage: make_synthetic {{markov|disjoint}} NUM_AUTHORS OUT");
        std::process::exit(2);
    }
    let authors: usize = args[1].parse().expect("NUM_AUTHORS must be an integer");
    let docs = match args[0].as_str() {
        "markov" => markov_style_corpus(&MarkovConfig { num_authors: authors, ..Default::default() }),
        "disjoint" => disjoint_alphabet_corpus(&DisjointConfig { num_authors: authors, ..Default::default() }),
        other => {
            eprintln!("unknown corpus kind {other}");
            std::process::exit(2);
        }
    };
    let out = BufWriter::new(File::create(&args[2]).expect("cannot create output"));
    write_corpus(out, &docs).expect("write failed");
}
