//! Sparse multivariate polynomials and the two ACOPF formulations.
//!
//! [`build_op4`] produces the degree-4 program over `x = [Re V; Im V]` only;
//! [`build_op2`] lifts it to degree 2 with auxiliary generation variables
//! `P^g_k` (for quadratically-costed generators) and flow variables
//! `P_lm`, `Q_lm` tied to `x` by equality constraints.
//!
//! Monomials are ordered graded-lexicographically, which fixes a canonical
//! term order for every polynomial and makes program construction and the
//! text dump deterministic.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::network::{OpfMatrices, PowerNetwork, SymMatrix};

/// A power product `x^α`, stored sparse; variables with zero exponent are
/// absent. Ordering is graded lex: lower total degree first, then
/// lexicographic in the exponent vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Vec<(usize, u32)>,
    degree: u32,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial {
            exps: Vec::new(),
            degree: 0,
        }
    }

    pub fn var(i: usize) -> Self {
        Monomial {
            exps: vec![(i, 1)],
            degree: 1,
        }
    }

    pub fn from_exps(mut exps: Vec<(usize, u32)>) -> Self {
        exps.retain(|&(_, p)| p > 0);
        exps.sort_unstable_by_key(|&(v, _)| v);
        let mut merged: Vec<(usize, u32)> = Vec::with_capacity(exps.len());
        for (v, p) in exps {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        let degree = merged.iter().map(|&(_, p)| p).sum();
        Monomial {
            exps: merged,
            degree,
        }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn exps(&self) -> &[(usize, u32)] {
        &self.exps
    }

    pub fn is_constant(&self) -> bool {
        self.exps.is_empty()
    }

    /// Set of variables with positive exponent.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.exps.iter().map(|&(v, _)| v)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut exps = self.exps.clone();
        exps.extend_from_slice(&other.exps);
        Monomial::from_exps(exps)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exps
            .iter()
            .map(|&(v, p)| x[v].powi(p as i32))
            .product()
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree
            .cmp(&other.degree)
            .then_with(|| {
                // Lexicographic on the dense exponent sequence: compare
                // variable-by-variable; a smaller variable index with a
                // positive exponent sorts first.
                let mut a = self.exps.iter();
                let mut b = other.exps.iter();
                loop {
                    match (a.next(), b.next()) {
                        (None, None) => return std::cmp::Ordering::Equal,
                        (None, Some(_)) => return std::cmp::Ordering::Greater,
                        (Some(_), None) => return std::cmp::Ordering::Less,
                        (Some(&(va, pa)), Some(&(vb, pb))) => {
                            match va.cmp(&vb).then(pb.cmp(&pa)) {
                                std::cmp::Ordering::Equal => continue,
                                ord => return ord,
                            }
                        }
                    }
                }
            })
    }
}

/// Polynomial with canonical (graded-lex) term order and no explicit zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Polynomial::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(i: usize) -> Self {
        let mut p = Polynomial::zero();
        p.add_term(Monomial::var(i), 1.0);
        p
    }

    /// Quadratic form xᵀ A x as a polynomial, with matrix row/column `i`
    /// mapped to variable `i + offset`.
    pub fn from_quad_form(a: &SymMatrix, offset: usize) -> Self {
        let mut p = Polynomial::zero();
        for &(i, j, v) in &a.entries {
            let m = Monomial::from_exps(vec![(i + offset, 1), (j + offset, 1)]);
            p.add_term(m, if i == j { v } else { 2.0 * v });
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            let key = self
                .terms
                .iter()
                .find(|(_, &v)| v == 0.0)
                .map(|(k, _)| k.clone());
            if let Some(key) = key {
                self.terms.remove(&key);
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero();
        if s == 0.0 {
            return out;
        }
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero();
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms().map(|(m, c)| c * m.eval(x)).sum()
    }

    /// Variables appearing with nonzero coefficient.
    pub fn support(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self
            .terms
            .keys()
            .flat_map(|m| m.support().collect::<Vec<_>>())
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }
}

/// Polynomial program: minimize `objective` subject to `g ≥ 0` for every
/// inequality and `h = 0` for every equality.
#[derive(Debug, Clone)]
pub struct PolyProgram {
    pub objective: Polynomial,
    pub inequalities: Vec<Polynomial>,
    pub equalities: Vec<Polynomial>,
    pub var_names: Vec<String>,
}

impl PolyProgram {
    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    /// Largest degree over objective and all constraints.
    pub fn degree(&self) -> u32 {
        self.objective
            .degree()
            .max(
                self.inequalities
                    .iter()
                    .chain(&self.equalities)
                    .map(|p| p.degree())
                    .max()
                    .unwrap_or(0),
            )
    }

    /// Deterministic one-polynomial-per-line text dump for golden tests.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let write_poly = |out: &mut String, p: &Polynomial| {
            if p.is_zero() {
                out.push('0');
            }
            for (i, (m, c)) in p.terms().enumerate() {
                if i > 0 {
                    out.push_str(" + ");
                }
                let _ = write!(out, "{c:.12e}");
                for &(v, pow) in m.exps() {
                    let _ = write!(out, "*{}", self.var_names[v]);
                    if pow > 1 {
                        let _ = write!(out, "^{pow}");
                    }
                }
            }
            out.push('\n');
        };
        out.push_str("min ");
        write_poly(&mut out, &self.objective);
        for g in &self.inequalities {
            out.push_str("ineq ");
            write_poly(&mut out, g);
        }
        for h in &self.equalities {
            out.push_str("eq ");
            write_poly(&mut out, h);
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("operands belong to different variable spaces ({0} vs {1} variables)")]
    VariableSpaceMismatch(usize, usize),
}

/// Emits a two-sided bound `lo ≤ expr ≤ hi` into the right constraint lists:
/// a single equality when the bound is degenerate (`lo == hi`), otherwise the
/// pair `expr − lo ≥ 0`, `hi − expr ≥ 0`.
fn push_two_sided(
    ineqs: &mut Vec<Polynomial>,
    eqs: &mut Vec<Polynomial>,
    expr: &Polynomial,
    lo: f64,
    hi: f64,
) {
    if lo == hi {
        eqs.push(expr.sub(&Polynomial::constant(lo)));
    } else {
        ineqs.push(expr.sub(&Polynomial::constant(lo)));
        ineqs.push(Polynomial::constant(hi).sub(expr));
    }
}

/// The redundant voltage ball `Σ_k (V_k^max)² − Σ_k (Re V_k² + Im V_k²) ≥ 0`
/// that keeps the feasible set explicitly compact.
fn ball_constraint(net: &PowerNetwork) -> Polynomial {
    let radius2: f64 = net.v_bounds.iter().map(|&(_, vmax)| vmax * vmax).sum();
    let mut p = Polynomial::constant(radius2);
    for i in 0..2 * net.n {
        p.add_term(Monomial::from_exps(vec![(i, 1), (i, 1)]), -1.0);
    }
    p
}

fn voltage_var_names(net: &PowerNetwork) -> Vec<String> {
    (0..net.n)
        .map(|k| format!("ReV{}", net.bus_ids[k]))
        .chain((0..net.n).map(|k| format!("ImV{}", net.bus_ids[k])))
        .collect()
}

/// Degree-4 formulation over voltage variables only.
pub fn build_op4(net: &PowerNetwork, mats: &OpfMatrices) -> PolyProgram {
    let mut ineqs = Vec::new();
    let mut eqs = Vec::new();
    let mut objective = Polynomial::zero();

    for k in 0..net.n {
        let p_expr = Polynomial::from_quad_form(&mats.yk[k], 0)
            .add(&Polynomial::constant(net.demand[k].0));
        let q_expr = Polynomial::from_quad_form(&mats.ybar_k[k], 0)
            .add(&Polynomial::constant(net.demand[k].1));
        let v_expr = Polynomial::from_quad_form(&mats.mk[k], 0);
        push_two_sided(&mut ineqs, &mut eqs, &p_expr, net.p_bounds[k].0, net.p_bounds[k].1);
        push_two_sided(&mut ineqs, &mut eqs, &q_expr, net.q_bounds[k].0, net.q_bounds[k].1);
        let (vmin, vmax) = net.v_bounds[k];
        push_two_sided(&mut ineqs, &mut eqs, &v_expr, vmin * vmin, vmax * vmax);
        let (c2, c1, c0) = net.cost[k];
        if net.gens.binary_search(&k).is_ok() {
            if c2 != 0.0 {
                objective = objective.add(&p_expr.mul(&p_expr).scale(c2));
            }
            objective = objective.add(&p_expr.scale(c1));
            objective = objective.add(&Polynomial::constant(c0));
        }
    }
    for (fi, (_, _, ylm, ybarlm)) in mats.flows.iter().enumerate() {
        let p = Polynomial::from_quad_form(ylm, 0);
        let q = Polynomial::from_quad_form(ybarlm, 0);
        let s_max = net.branches[net.flow_limited[fi / 2]].s_max;
        let g = Polynomial::constant(s_max * s_max)
            .sub(&p.mul(&p))
            .sub(&q.mul(&q));
        ineqs.push(g);
    }
    ineqs.push(ball_constraint(net));

    PolyProgram {
        objective,
        inequalities: ineqs,
        equalities: eqs,
        var_names: voltage_var_names(net),
    }
}

/// Degree-2 lifted formulation: voltage variables, then `P^g_k` for
/// quadratically-costed generators, then `(P_lm, Q_lm)` per directed
/// flow-limited branch.
pub fn build_op2(net: &PowerNetwork, mats: &OpfMatrices) -> PolyProgram {
    let nv = 2 * net.n;
    let mut var_names = voltage_var_names(net);
    let mut pg_index = BTreeMap::new();
    for &k in &net.gens {
        if net.cost[k].0 != 0.0 {
            pg_index.insert(k, var_names.len());
            var_names.push(format!("Pg{}", net.bus_ids[k]));
        }
    }
    let mut flow_index = Vec::new();
    for (l, m, _, _) in &mats.flows {
        flow_index.push(var_names.len());
        var_names.push(format!("P{}_{}", net.bus_ids[*l], net.bus_ids[*m]));
        var_names.push(format!("Q{}_{}", net.bus_ids[*l], net.bus_ids[*m]));
    }

    let mut ineqs = Vec::new();
    let mut eqs = Vec::new();
    let mut objective = Polynomial::zero();

    for k in 0..net.n {
        let p_expr = Polynomial::from_quad_form(&mats.yk[k], 0)
            .add(&Polynomial::constant(net.demand[k].0));
        let q_expr = Polynomial::from_quad_form(&mats.ybar_k[k], 0)
            .add(&Polynomial::constant(net.demand[k].1));
        let v_expr = Polynomial::from_quad_form(&mats.mk[k], 0);
        push_two_sided(&mut ineqs, &mut eqs, &p_expr, net.p_bounds[k].0, net.p_bounds[k].1);
        push_two_sided(&mut ineqs, &mut eqs, &q_expr, net.q_bounds[k].0, net.q_bounds[k].1);
        let (vmin, vmax) = net.v_bounds[k];
        push_two_sided(&mut ineqs, &mut eqs, &v_expr, vmin * vmin, vmax * vmax);
        let (c2, c1, c0) = net.cost[k];
        if net.gens.binary_search(&k).is_ok() {
            if let Some(&pg) = pg_index.get(&k) {
                // P^g_k = tr(Y_k xxᵀ) + P_k^d
                eqs.push(Polynomial::var(pg).sub(&p_expr));
                let pg_poly = Polynomial::var(pg);
                objective = objective.add(&pg_poly.mul(&pg_poly).scale(c2));
            }
            objective = objective.add(&p_expr.scale(c1));
            objective = objective.add(&Polynomial::constant(c0));
        }
    }
    for (fi, (_, _, ylm, ybarlm)) in mats.flows.iter().enumerate() {
        let pv = flow_index[fi];
        let qv = pv + 1;
        eqs.push(Polynomial::var(pv).sub(&Polynomial::from_quad_form(ylm, 0)));
        eqs.push(Polynomial::var(qv).sub(&Polynomial::from_quad_form(ybarlm, 0)));
        let s_max = net.branches[net.flow_limited[fi / 2]].s_max;
        let mut g = Polynomial::constant(s_max * s_max);
        g.add_term(Monomial::from_exps(vec![(pv, 2)]), -1.0);
        g.add_term(Monomial::from_exps(vec![(qv, 2)]), -1.0);
        ineqs.push(g);
    }
    ineqs.push(ball_constraint(net));

    debug_assert!(nv <= var_names.len());
    PolyProgram {
        objective,
        inequalities: ineqs,
        equalities: eqs,
        var_names,
    }
}

/// Given an [OP₄] point `x`, produces the corresponding [OP₂] point by
/// evaluating the lifting equalities.
pub fn lift_op4_point(net: &PowerNetwork, mats: &OpfMatrices, x: &[f64]) -> Vec<f64> {
    let mut z = x.to_vec();
    for &k in &net.gens {
        if net.cost[k].0 != 0.0 {
            z.push(mats.yk[k].quad(x) + net.demand[k].0);
        }
    }
    for (_, _, ylm, ybarlm) in &mats.flows {
        z.push(ylm.quad(x));
        z.push(ybarlm.quad(x));
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::corpus_case;
    use crate::network::{build_network, build_opf_matrices};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn difference_of_squares() {
        let x1 = Polynomial::var(0);
        let x2 = Polynomial::var(1);
        let prod = x1.add(&x2).mul(&x1.sub(&x2));
        let mut expect = Polynomial::zero();
        expect.add_term(Monomial::from_exps(vec![(0, 2)]), 1.0);
        expect.add_term(Monomial::from_exps(vec![(1, 2)]), -1.0);
        assert_eq!(prod, expect);
    }

    #[test]
    fn eval_power_product() {
        let mut p = Polynomial::zero();
        p.add_term(Monomial::from_exps(vec![(0, 2), (1, 1)]), 1.0);
        assert_eq!(p.eval(&[2.0, 3.0]), 12.0);
    }

    #[test]
    fn product_matches_naive_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            // Random degree-≤3 polynomials in 3 variables.
            let rand_poly = |rng: &mut ChaCha8Rng| {
                let mut p = Polynomial::zero();
                for _ in 0..6 {
                    let exps: Vec<(usize, u32)> = (0..3)
                        .map(|v| (v, rng.gen_range(0..2)))
                        .collect();
                    p.add_term(Monomial::from_exps(exps), rng.gen_range(-2.0..2.0));
                }
                p
            };
            let a = rand_poly(&mut rng);
            let b = rand_poly(&mut rng);
            let prod = a.mul(&b);
            // Naive oracle: evaluate both sides at random points.
            for _ in 0..10 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let lhs = prod.eval(&x);
                let rhs = a.eval(&x) * b.eval(&x);
                assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn graded_lex_order_is_deterministic() {
        let m1 = Monomial::from_exps(vec![(0, 1)]);
        let m2 = Monomial::from_exps(vec![(1, 1)]);
        let m3 = Monomial::from_exps(vec![(0, 2)]);
        let m4 = Monomial::one();
        let mut v = vec![m3.clone(), m1.clone(), m4.clone(), m2.clone()];
        v.sort();
        assert_eq!(v, vec![m4, m1, m2, m3]);
    }

    fn wb2() -> (PowerNetwork, OpfMatrices) {
        let case = corpus_case("WB2", &[]).unwrap();
        let net = build_network(&case).unwrap();
        let mats = build_opf_matrices(&net);
        (net, mats)
    }

    #[test]
    fn wb2_op4_shape() {
        let (net, mats) = wb2();
        let pp = build_op4(&net, &mats);
        assert_eq!(pp.num_vars(), 4);
        // Linear cost only → degree 2 objective.
        assert_eq!(pp.objective.degree(), 2);
        assert_eq!(pp.degree(), 2);
        // Bus 1: P,Q,V two-sided (6 ineqs). Bus 2: P,Q degenerate at the
        // demand (2 equalities), V two-sided (2 ineqs). No flow limits.
        // Plus the redundant ball.
        assert_eq!(pp.equalities.len(), 2);
        assert_eq!(pp.inequalities.len(), 6 + 2 + 1);
    }

    #[test]
    fn op2_degree_bound() {
        for name in crate::case_io::CORPUS {
            let case = corpus_case(name, &[]).unwrap();
            let net = build_network(&case).unwrap();
            let mats = build_opf_matrices(&net);
            let pp = build_op2(&net, &mats);
            assert!(pp.degree() <= 2, "{name}");
            let expected_vars = 2 * net.n
                + net.gens.iter().filter(|&&k| net.cost[k].0 != 0.0).count()
                + 2 * mats.flows.len();
            assert_eq!(pp.num_vars(), expected_vars, "{name}");
        }
    }

    #[test]
    fn op4_degree_four_with_quadratic_cost_or_flows() {
        let case = corpus_case("LMBM3", &[]).unwrap();
        let net = build_network(&case).unwrap();
        let mats = build_opf_matrices(&net);
        let pp = build_op4(&net, &mats);
        assert_eq!(pp.degree(), 4);
    }

    #[test]
    fn lifted_points_match_objectives() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in ["WB2", "LMBM3", "WB5"] {
            let case = corpus_case(name, &[]).unwrap();
            let net = build_network(&case).unwrap();
            let mats = build_opf_matrices(&net);
            let op4 = build_op4(&net, &mats);
            let op2 = build_op2(&net, &mats);
            for _ in 0..100 {
                let x: Vec<f64> =
                    (0..2 * net.n).map(|_| rng.gen_range(-1.2..1.2)).collect();
                let z = lift_op4_point(&net, &mats, &x);
                let f4 = op4.objective.eval(&x);
                let f2 = op2.objective.eval(&z);
                assert!(
                    (f4 - f2).abs() <= 1e-9 * (1.0 + f4.abs()),
                    "{name}: {f4} vs {f2}"
                );
                // Lifting equalities hold exactly.
                for h in &op2.equalities {
                    if h.support().iter().any(|&v| v >= 2 * net.n) {
                        assert!(h.eval(&z).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn dump_is_stable() {
        let (net, mats) = wb2();
        let a = build_op2(&net, &mats).dump();
        let b = build_op2(&net, &mats).dump();
        assert_eq!(a, b);
        assert!(a.starts_with("min "));
    }
}
