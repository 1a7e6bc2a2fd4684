//! Three fair binary variables that pairwise agree a quarter of the time
//! cannot share a joint distribution.

use beamsplit::bell::{atom_label, check_feasibility, conjunction_bound, implied_agreement_bound, Feasibility, PairwiseSpec};

fn main() {
    let spec = PairwiseSpec {
        marginals: [0.5; 3],
        agreements: [0.25; 3],
    };
    match check_feasibility(&spec).unwrap() {
        Feasibility::Infeasible { certificate } => {
            println!("infeasible; certificate verified: {}", certificate.verify(&spec));
            for (atom, g) in certificate.functional.iter().enumerate() {
                println!("  g({}) = {g}", atom_label(atom));
            }
            println!("  implied expectation = {}", certificate.value);
        }
        Feasibility::Feasible { .. } => unreachable!(),
    }

    println!("P(A and B) >= {} when P(A) = P(B) = 3/4", conjunction_bound(0.75, 0.75).unwrap());
    println!("P(X1 = X2) >= {} when the other agreements are 1/4", implied_agreement_bound(0.25, 0.25).unwrap());

    for a12 in [0.25, 0.45, 0.5, 0.75, 1.0] {
        let s = PairwiseSpec {
            marginals: [0.5; 3],
            agreements: [a12, 0.25, 0.25],
        };
        match check_feasibility(&s).unwrap() {
            Feasibility::Feasible { witness } => println!("P(X1 = X2) = {a12}: feasible, witness {:?}", witness.weights),
            Feasibility::Infeasible { .. } => println!("P(X1 = X2) = {a12}: infeasible"),
        }
    }
}
