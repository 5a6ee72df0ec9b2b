//! Parse a schema program, print its grounding order, canonical text and DOT graph.
//!
//! cargo run --example parse_schema [path/to/file.schema]

use dsg::schema::{parse_schema, render_schema, to_dot, topological_order};

const ATOM: &str = "gen(concept=atom) =
    gen(nucleus | concept=atom)
    gen(electrons | concept=atom)
    gen(energy-levels | concept=atom, nucleus, electrons)
";

fn main() {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path).expect("readable schema file"),
        None => ATOM.to_string(),
    };
    let program = match parse_schema(&text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class_name());
            std::process::exit(1);
        }
    };
    println!(
        "concept: {} ({} components, {} edges)",
        program.concept(),
        program.len(),
        program.edge_count()
    );
    let order: Vec<String> = topological_order(&program).iter().map(|c| c.to_string()).collect();
    println!("grounding order: {}", order.join(" -> "));
    println!("\n{}", render_schema(&program));
    println!("{}", to_dot(&program));

    for bad in [
        "gen(concept=maze) =\n    gen(exit | concept=maze, layout)\n    gen(layout | concept=maze)",
        "gen(concept=maze) =\n    gen(a | concept=maze)\n    gen(b | concept=maze)\n    gen(c | concept=maze)\n    gen(d | concept=maze)\n    gen(e | concept=maze)",
        "gen(concept=maze) =\n    gen(layout | concept=maze",
    ] {
        let err = parse_schema(bad).unwrap_err();
        println!("rejected [{}]: {err}", err.class_name());
    }
}
