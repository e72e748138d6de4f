//! Parses a PENMAN graph, aligns it to tokens and prints the trigger to
//! argument paths the scorer sees.
//!
//!     cargo run --example amr_paths

use stf_ee::amr::{parse_penman, serialize_path, to_penman, TokenSpan};

const GRAPH: &str = r#"
(a / attack-01
   :ARG0 (c / commando)
   :ARG1 (b / base
            :mod (m / military))
   :location (c2 / city :name (n / name :op1 "Basra"))
   :time (d / dawn))
"#;

fn main() -> stf_ee::Result<()> {
    let tokens: Vec<String> = "commandos attacked the military base in Basra at dawn"
        .split(' ')
        .map(String::from)
        .collect();
    let mut graph = parse_penman(GRAPH)?;
    for (id, start) in [("c", 0), ("a", 1), ("m", 3), ("b", 4), ("c2", 6), ("d", 8)] {
        graph.set_alignment(id, TokenSpan::new(start, start + 1))?;
    }
    println!("{}\n", to_penman(&graph));

    let event_types = vec!["Attack".to_string()];
    let roles = vec!["O".to_string(), "Attacker".into(), "Target".into(), "Place".into(), "Time".into()];
    let trigger = TokenSpan::new(1, 2);
    let arguments = [(0, 1), (4, 2), (6, 3), (8, 4), (3, 2)];

    let aligned = graph.align_nodes(tokens.len(), &[trigger]);
    let src = aligned[0].clone().expect("trigger is aligned");
    for (tok, role) in arguments {
        let span = TokenSpan::new(tok, tok + 1);
        let dst = graph.align_nodes(tokens.len(), &[span])[0].clone().expect("argument is aligned");
        let path = graph.shortest_path(&src, &dst)?;
        let seq = serialize_path(0, &path, role);
        println!(
            "{:<8} hops {}  {}",
            tokens[tok],
            path.hops(),
            seq.render(&event_types, &roles, Some(&tokens)).join(" -> ")
        );
    }

    // Trigger and argument on the same node get a synthetic edge.
    let path = graph.shortest_path(&src, &src)?;
    let seq = serialize_path(0, &path, 0);
    println!(
        "\nsame node: fallback {}  {}",
        path.synthetic_fallback,
        seq.render(&event_types, &roles, Some(&tokens)).join(" -> ")
    );
    Ok(())
}
