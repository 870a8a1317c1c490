//! Correlative sparsity graph, minimum-degree chordal extension, maximal
//! cliques, clique merging, and running-intersection ordering.

use std::collections::BTreeSet;

use crate::polyprog::PolyProgram;

/// Correlative sparsity pattern: vertices are program variables; two
/// variables are adjacent when they share a monomial of the objective or
/// appear in the same constraint (equalities included). Diagonal is implicit.
#[derive(Debug, Clone)]
pub struct CspGraph {
    pub n: usize,
    pub adj: Vec<BTreeSet<usize>>,
}

impl CspGraph {
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i == j || self.adj[i].contains(&j)
    }
}

pub fn build_csp(pp: &PolyProgram) -> CspGraph {
    let n = pp.num_vars();
    let mut adj = vec![BTreeSet::new(); n];
    let connect = |vars: &[usize], adj: &mut Vec<BTreeSet<usize>>| {
        for (a, &i) in vars.iter().enumerate() {
            for &j in &vars[a + 1..] {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    };
    for (m, _) in pp.objective.terms() {
        let vars: Vec<usize> = m.support().collect();
        connect(&vars, &mut adj);
    }
    for g in pp.inequalities.iter().chain(&pp.equalities) {
        connect(&g.support(), &mut adj);
    }
    CspGraph { n, adj }
}

#[derive(Debug, Clone)]
pub struct CliqueDecomposition {
    /// Maximal cliques in running-intersection order; each sorted ascending.
    pub cliques: Vec<Vec<usize>>,
    /// Elimination ordering used for the symbolic factorization.
    pub ordering: Vec<usize>,
    /// Clique index assigned to each inequality / equality of the program
    /// this decomposition was built for (first covering clique in order).
    pub ineq_clique: Vec<usize>,
    pub eq_clique: Vec<usize>,
}

impl CliqueDecomposition {
    /// One clique per line, vertices sorted, for golden tests.
    pub fn dump(&self) -> String {
        self.cliques
            .iter()
            .map(|c| {
                c.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Verifies the running intersection property.
    pub fn rip_holds(&self) -> bool {
        for k in 1..self.cliques.len() {
            let prev: BTreeSet<usize> = self.cliques[..k].iter().flatten().copied().collect();
            let inter: BTreeSet<usize> = self.cliques[k]
                .iter()
                .copied()
                .filter(|v| prev.contains(v))
                .collect();
            if inter.is_empty() {
                continue;
            }
            let ok = self.cliques[..k]
                .iter()
                .any(|c| inter.iter().all(|v| c.contains(v)));
            if !ok {
                return false;
            }
        }
        true
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Minimum-degree elimination ordering (ties to the lowest vertex index),
/// returning the ordering and the filled (chordal) graph.
fn min_degree_fill(g: &CspGraph) -> (Vec<usize>, Vec<BTreeSet<usize>>) {
    let n = g.n;
    let mut work: Vec<BTreeSet<usize>> = g.adj.clone();
    let mut fill: Vec<BTreeSet<usize>> = g.adj.clone();
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (work[v].len(), v))
            .unwrap();
        let nbrs: Vec<usize> = work[v].iter().copied().collect();
        for (a, &i) in nbrs.iter().enumerate() {
            for &j in &nbrs[a + 1..] {
                if work[i].insert(j) {
                    work[j].insert(i);
                    fill[i].insert(j);
                    fill[j].insert(i);
                }
            }
        }
        for &i in &nbrs {
            work[i].remove(&v);
        }
        alive[v] = false;
        order.push(v);
    }
    (order, fill)
}

/// Chordal decomposition with clique merging and RIP ordering; `r` is the
/// moment-basis degree used by the merge heuristic (blocks with
/// binomial(|I|+r, r) below the threshold that share at least half their
/// vertices with another clique get merged).
pub fn chordal_cliques(g: &CspGraph, pp: &PolyProgram, r: usize) -> CliqueDecomposition {
    let (order, fill) = min_degree_fill(g);
    let mut pos = vec![0usize; g.n];
    for (p, &v) in order.iter().enumerate() {
        pos[v] = p;
    }
    // Candidate cliques: v plus later-eliminated neighbors in the fill graph.
    let mut cliques: Vec<BTreeSet<usize>> = order
        .iter()
        .map(|&v| {
            let mut c: BTreeSet<usize> =
                fill[v].iter().copied().filter(|&u| pos[u] > pos[v]).collect();
            c.insert(v);
            c
        })
        .collect();
    drop_non_maximal(&mut cliques);

    // Merge heuristic.
    const MERGE_THRESHOLD: usize = 16;
    loop {
        let mut merged = false;
        'outer: for a in 0..cliques.len() {
            if binomial(cliques[a].len() + r, r) >= MERGE_THRESHOLD {
                continue;
            }
            for b in 0..cliques.len() {
                if a == b {
                    continue;
                }
                let shared = cliques[a].intersection(&cliques[b]).count();
                if 2 * shared >= cliques[a].len() {
                    let other = cliques[b].clone();
                    cliques[a].extend(other);
                    cliques.swap_remove(b);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
        drop_non_maximal(&mut cliques);
    }

    // RIP ordering: greedy maximum intersection with the running union,
    // seeded with the clique containing the last-eliminated vertex (ties to
    // the lexicographically smallest clique).
    let mut rest: Vec<BTreeSet<usize>> = cliques;
    rest.sort_by(|a, b| {
        a.iter()
            .map(|&v| pos[v])
            .max()
            .cmp(&b.iter().map(|&v| pos[v]).max())
            .reverse()
            .then_with(|| a.cmp(b))
    });
    let mut ordered = vec![rest.remove(0)];
    let mut union: BTreeSet<usize> = ordered[0].clone();
    while !rest.is_empty() {
        let best = (0..rest.len())
            .max_by_key(|&i| {
                (
                    rest[i].intersection(&union).count(),
                    std::cmp::Reverse(rest[i].clone()),
                )
            })
            .unwrap();
        let c = rest.remove(best);
        union.extend(c.iter().copied());
        ordered.push(c);
    }
    let cliques: Vec<Vec<usize>> = ordered
        .into_iter()
        .map(|c| c.into_iter().collect())
        .collect();

    // Assign each constraint to the first covering clique.
    let assign = |p: &crate::polyprog::Polynomial| -> usize {
        let sup = p.support();
        cliques
            .iter()
            .position(|c| sup.iter().all(|v| c.contains(v)))
            .expect("constraint support not covered by any clique")
    };
    let ineq_clique = pp.inequalities.iter().map(&assign).collect();
    let eq_clique = pp.equalities.iter().map(&assign).collect();

    let cd = CliqueDecomposition {
        cliques,
        ordering: order,
        ineq_clique,
        eq_clique,
    };
    debug_assert!(cd.rip_holds());
    cd
}

fn drop_non_maximal(cliques: &mut Vec<BTreeSet<usize>>) {
    let mut keep = Vec::new();
    'next: for i in 0..cliques.len() {
        for j in 0..cliques.len() {
            if i != j
                && cliques[i].len() <= cliques[j].len()
                && cliques[i].is_subset(&cliques[j])
                && (cliques[i].len() < cliques[j].len() || i > j)
            {
                continue 'next;
            }
        }
        keep.push(cliques[i].clone());
    }
    *cliques = keep;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::corpus_case;
    use crate::network::{build_network, build_opf_matrices};
    use crate::polyprog::{build_op2, build_op4, PolyProgram, Polynomial};

    fn graph(n: usize, edges: &[(usize, usize)]) -> CspGraph {
        let mut adj = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            adj[i].insert(j);
            adj[j].insert(i);
        }
        CspGraph { n, adj }
    }

    fn empty_pp(n: usize) -> PolyProgram {
        PolyProgram {
            objective: Polynomial::zero(),
            inequalities: vec![],
            equalities: vec![],
            var_names: (0..n).map(|i| format!("x{i}")).collect(),
        }
    }

    #[test]
    fn csp_from_objective_monomials() {
        // x0·x1 + x2² → edge (0,1); vertex 2 isolated.
        let x0 = Polynomial::var(0);
        let x1 = Polynomial::var(1);
        let x2 = Polynomial::var(2);
        let pp = PolyProgram {
            objective: x0.mul(&x1).add(&x2.mul(&x2)),
            inequalities: vec![],
            equalities: vec![],
            var_names: vec!["a".into(), "b".into(), "c".into()],
        };
        let g = build_csp(&pp);
        assert!(g.has_edge(0, 1));
        assert!(g.adj[2].is_empty());
    }

    #[test]
    fn complete_graph_single_clique() {
        let g = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let cd = chordal_cliques(&g, &empty_pp(4), 1);
        assert_eq!(cd.cliques, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn path_graph_cliques() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        // Disable merging effects by using a large r? Merging with r=1:
        // binomial(2+1,1)=3 < 16 and consecutive cliques share half →
        // everything merges. Use the raw structure with a clique-size check
        // instead: pairs before merging are {0,1},{1,2},{2,3}; after the
        // merge heuristic the union still covers every edge and RIP holds.
        let cd = chordal_cliques(&g, &empty_pp(4), 1);
        assert!(cd.rip_holds());
        for (i, j) in [(0, 1), (1, 2), (2, 3)] {
            assert!(
                cd.cliques.iter().any(|c| c.contains(&i) && c.contains(&j)),
                "edge ({i},{j}) uncovered"
            );
        }
    }

    #[test]
    fn four_cycle_two_triangles() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let (order, fill) = min_degree_fill(&g);
        assert_eq!(order[0], 0); // lowest index among equal degrees
        // One fill edge, giving two triangles.
        let fill_edges: usize = (0..4).map(|v| fill[v].len()).sum::<usize>() / 2;
        assert_eq!(fill_edges, 5);
        let mut pos = vec![0; 4];
        for (p, &v) in order.iter().enumerate() {
            pos[v] = p;
        }
        let mut cliques: Vec<BTreeSet<usize>> = order
            .iter()
            .map(|&v| {
                let mut c: BTreeSet<usize> =
                    fill[v].iter().copied().filter(|&u| pos[u] > pos[v]).collect();
                c.insert(v);
                c
            })
            .collect();
        drop_non_maximal(&mut cliques);
        let mut sizes: Vec<usize> = cliques.iter().map(|c| c.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3]);
    }

    #[test]
    fn corpus_decompositions_satisfy_rip_and_cover() {
        for name in crate::case_io::CORPUS {
            let case = corpus_case(name, &[]).unwrap();
            let net = build_network(&case).unwrap();
            let mats = build_opf_matrices(&net);
            for pp in [build_op2(&net, &mats), build_op4(&net, &mats)] {
                let g = build_csp(&pp);
                let cd = chordal_cliques(&g, &pp, 1);
                assert!(cd.rip_holds(), "{name}");
                // Every CSP edge inside some clique (chordal extension is a
                // supergraph of g).
                for i in 0..g.n {
                    for &j in g.adj[i].iter().filter(|&&j| j > i) {
                        assert!(
                            cd.cliques.iter().any(|c| c.contains(&i) && c.contains(&j)),
                            "{name}: edge ({i},{j})"
                        );
                    }
                }
                // Assignments cover their constraints by construction
                // (position() would have panicked otherwise).
                assert_eq!(cd.ineq_clique.len(), pp.inequalities.len());
                assert_eq!(cd.eq_clique.len(), pp.equalities.len());
            }
        }
    }

    #[test]
    fn wb5_csp_matches_bruteforce_scan() {
        let case = corpus_case("WB5", &[]).unwrap();
        let net = build_network(&case).unwrap();
        let mats = build_opf_matrices(&net);
        let pp = build_op4(&net, &mats);
        let g = build_csp(&pp);
        assert_eq!(g.n, 10);
        // Brute-force pairwise support scan.
        let mut expect = vec![BTreeSet::new(); g.n];
        let connect = |vars: &[usize], adj: &mut Vec<BTreeSet<usize>>| {
            for &i in vars {
                for &j in vars {
                    if i != j {
                        adj[i].insert(j);
                    }
                }
            }
        };
        for (m, _) in pp.objective.terms() {
            connect(&m.support().collect::<Vec<_>>(), &mut expect);
        }
        for c in pp.inequalities.iter().chain(&pp.equalities) {
            connect(&c.support(), &mut expect);
        }
        assert_eq!(g.adj, expect);
    }
}
