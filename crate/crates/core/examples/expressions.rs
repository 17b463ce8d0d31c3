//! Parse, print, evaluate and dimension-check expressions in the formula
//! language.
//!
//! ```bash
//! cargo run -p ipg-core --example expressions
//! ```

use std::collections::BTreeMap;

use ipg::expr::{evaluate, infer_dimension, parse_expression};
use ipg::units::Unit;

fn main() {
    let src = "sqrt(u^2 + 2*a*s)";
    let e = parse_expression(src).unwrap();
    println!("parsed `{src}` as `{e}`  (python: {})", e.to_python());

    let env = BTreeMap::from([("u".to_string(), 3.0), ("a".to_string(), 2.0), ("s".to_string(), 4.0)]);
    println!("value with u=3, a=2, s=4: {}", evaluate(&e, &env).unwrap());

    let units = BTreeMap::from([("u", "m/s"), ("a", "m/s^2"), ("s", "m")]);
    let lookup = |n: &str| units.get(n).map(|u| Unit::parse(u).unwrap().dimension());
    println!("dimension: {}", infer_dimension(&e, &lookup).unwrap());

    let bad = parse_expression("u + a").unwrap();
    println!("`u + a`: {}", infer_dimension(&bad, &lookup).unwrap_err());

    let branch = parse_expression("select(x >= 0 and x <= 1, x, 1 - x)").unwrap();
    for x in [0.25, 1.5] {
        let env = BTreeMap::from([("x".to_string(), x)]);
        println!("{branch}  at x={x}: {}", evaluate(&branch, &env).unwrap());
    }

    println!(
        "sqrt(-1): {}",
        evaluate(&parse_expression("sqrt(-1)").unwrap(), &env).unwrap_err()
    );
    println!("`2 +`: {}", parse_expression("2 +").unwrap_err());
}
