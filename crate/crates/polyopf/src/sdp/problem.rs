//! Block-diagonal SDP container shared by every relaxation builder.
//!
//! A problem is
//!
//! ```text
//!   min / max   Σ_b ⟨C_b, X_b⟩ + constant
//!   subject to  Σ_b ⟨A_{k,b}, X_b⟩  {= or ≥}  rhs_k      k = 1..m
//!               X_b ⪰ 0 for PSD blocks; free-diagonal blocks unconstrained
//! ```
//!
//! Symmetric coefficient matrices are stored upper-triangular: an [`Entry`]
//! `(block, i, j, c)` with `i < j` stands for the matrix with `c` at both
//! `(i,j)` and `(j,i)`, so it contributes `2·c·X_ij` to the inner product; a
//! diagonal entry contributes `c·X_ii`. Free-diagonal blocks hold scalar
//! variables on the diagonal only (off-diagonal entries are a builder bug).

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Psd,
    FreeDiag,
}

#[derive(Debug, Clone, Copy)]
pub struct Block {
    pub size: usize,
    pub kind: BlockKind,
}

/// One coefficient of a symmetric block matrix; invariant `row ≤ col`.
#[derive(Debug, Clone, Copy)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub coeff: f64,
}

impl Entry {
    pub fn new(block: usize, row: usize, col: usize, coeff: f64) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        Entry {
            block,
            row,
            col,
            coeff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub entries: Vec<Entry>,
    pub rhs: f64,
    pub sense: Sense,
    /// Provenance tag ("moment y[α]=y[β]", "cut 3", …) for diagnostics.
    pub label: String,
}

impl Constraint {
    pub fn new(entries: Vec<Entry>, rhs: f64, sense: Sense, label: impl Into<String>) -> Self {
        Constraint {
            entries: merge_entries(entries),
            rhs,
            sense,
            label: label.into(),
        }
    }
}

/// Sums duplicate coordinates and drops zeros, producing a canonical sorted
/// entry list.
pub fn merge_entries(entries: Vec<Entry>) -> Vec<Entry> {
    let mut map: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for e in entries {
        let (r, c) = if e.row <= e.col {
            (e.row, e.col)
        } else {
            (e.col, e.row)
        };
        *map.entry((e.block, r, c)).or_insert(0.0) += e.coeff;
    }
    map.into_iter()
        .filter(|&(_, v)| v != 0.0)
        .map(|((block, row, col), coeff)| Entry {
            block,
            row,
            col,
            coeff,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub blocks: Vec<Block>,
    pub objective: Vec<Entry>,
    pub obj_constant: f64,
    /// When true the problem maximizes; the solver minimizes the negation
    /// internally and reports objective values in the problem's own sense.
    pub maximize: bool,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(blocks: Vec<Block>) -> Self {
        SdpProblem {
            blocks,
            objective: Vec::new(),
            obj_constant: 0.0,
            maximize: false,
            constraints: Vec::new(),
        }
    }

    pub fn add_block(&mut self, size: usize, kind: BlockKind) -> usize {
        self.blocks.push(Block { size, kind });
        self.blocks.len() - 1
    }

    pub fn add_constraint(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    /// Total scalar dimension of all PSD blocks (for barrier parameters).
    pub fn psd_dimension(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.kind == BlockKind::Psd)
            .map(|b| b.size)
            .sum()
    }

    /// Panics on malformed structure; builders call this in tests.
    pub fn validate(&self) {
        let check = |e: &Entry, what: &str| {
            assert!(e.block < self.blocks.len(), "{what}: block out of range");
            let b = self.blocks[e.block];
            assert!(
                e.row <= e.col && e.col < b.size,
                "{what}: entry ({},{}) outside block of size {}",
                e.row,
                e.col,
                b.size
            );
            if b.kind == BlockKind::FreeDiag {
                assert!(e.row == e.col, "{what}: off-diagonal entry in free block");
            }
            assert!(e.coeff.is_finite(), "{what}: non-finite coefficient");
        };
        for e in &self.objective {
            check(e, "objective");
        }
        for (k, c) in self.constraints.iter().enumerate() {
            assert!(c.rhs.is_finite(), "row {k}: non-finite rhs");
            for e in &c.entries {
                check(e, &format!("row {k} ({})", c.label));
            }
        }
    }
}
