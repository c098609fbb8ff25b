//! Row-stochastic noise transition matrices and label corruption.
//!
//! `T[i][j]` is the probability that a clean label `i` is observed as `j`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::linalg::{solve_or_invert, DenseMatrix, Inverse};

pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseMatrix", into = "DenseMatrix")]
pub struct NoiseMatrix {
    matrix: DenseMatrix,
}

impl NoiseMatrix {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() == 0 {
            return Err(Error::InvalidNoiseMatrix(format!(
                "expected a non-empty square matrix, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        for r in 0..matrix.rows() {
            let row = matrix.row(r);
            if let Some(c) = row.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidNoiseMatrix(format!(
                    "entry ({r}, {c}) = {} outside [0, 1]",
                    row[c]
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidNoiseMatrix(format!("row {r} sums to {sum}")));
            }
        }
        Ok(Self { matrix })
    }

    pub fn identity(classes: usize) -> Self {
        Self {
            matrix: DenseMatrix::identity(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    /// `(1 − λ)·T + λ·I`
    pub fn mixed(&self, identity_mix: f64) -> DenseMatrix {
        if identity_mix == 0.0 {
            return self.matrix.clone();
        }
        let eye = DenseMatrix::identity(self.classes());
        self.matrix
            .combine(1.0 - identity_mix, &eye, identity_mix)
            .expect("same shape")
    }

    /// `((1 − λ)·T + λ·I)⁻¹`; λ = 0 is the plain inverse.
    pub fn inverse(&self, identity_mix: f64) -> Result<DenseMatrix> {
        Ok(self.inverse_with_condition(identity_mix)?.matrix)
    }

    pub fn inverse_with_condition(&self, identity_mix: f64) -> Result<Inverse> {
        if !(0.0..1.0).contains(&identity_mix) {
            return Err(Error::InvalidArgument(format!(
                "identity_mix {identity_mix} outside [0, 1)"
            )));
        }
        solve_or_invert(&self.mixed(identity_mix))
    }

    /// Resamples each label from its row of `T` with one uniform draw per label.
    pub fn corrupt(&self, labels: &[usize], seed: u64) -> Result<Vec<usize>> {
        let c = self.classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(labels
            .iter()
            .map(|&y| {
                let u: f64 = rng.gen();
                sample_row(self.row(y), u)
            })
            .collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.classes() {
            let line: Vec<String> = self.row(r).iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|field| {
                    field.trim().parse::<f64>().map_err(|e| {
                        Error::InvalidNoiseMatrix(format!("line {}: {e}", lineno + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        NoiseMatrix::new(DenseMatrix::from_rows(&rows)?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

impl TryFrom<DenseMatrix> for NoiseMatrix {
    type Error = Error;
    fn try_from(m: DenseMatrix) -> Result<Self> {
        NoiseMatrix::new(m)
    }
}

impl From<NoiseMatrix> for DenseMatrix {
    fn from(t: NoiseMatrix) -> Self {
        t.matrix
    }
}

/// Inverse-CDF draw from a probability row.
fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            last_positive = j;
        }
        acc += p;
        if u < acc {
            return j;
        }
    }
    // u landed in the rounding gap above the accumulated sum
    last_positive
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Identity,
    Symmetric,
    PairFlip,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(NoiseKind::Identity),
            "symmetric" => Ok(NoiseKind::Symmetric),
            "pair_flip" | "pair-flip" => Ok(NoiseKind::PairFlip),
            other => Err(Error::InvalidNoiseSpec(format!("unknown noise kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Identity => "identity",
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::PairFlip => "pair_flip",
        })
    }
}

/// One flipped class pair; `level` overrides the spec-wide level when set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipPair {
    pub source: usize,
    pub target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
}

impl FlipPair {
    pub fn new(source: usize, target: usize) -> Self {
        Self {
            source,
            target,
            level: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default)]
    pub level: f64,
    #[serde(default)]
    pub pairs: Vec<FlipPair>,
}

impl NoiseSpec {
    pub fn identity() -> Self {
        Self {
            kind: NoiseKind::Identity,
            level: 0.0,
            pairs: Vec::new(),
        }
    }

    pub fn symmetric(level: f64) -> Self {
        Self {
            kind: NoiseKind::Symmetric,
            level,
            pairs: Vec::new(),
        }
    }

    pub fn pair_flip(level: f64, pairs: &[(usize, usize)]) -> Self {
        Self {
            kind: NoiseKind::PairFlip,
            level,
            pairs: pairs.iter().map(|&(s, t)| FlipPair::new(s, t)).collect(),
        }
    }

    /// The MNIST digit flips 2→7, 3→8, 5↔6, 7→1.
    pub fn mnist_pairs(level: f64) -> Self {
        Self::pair_flip(level, &[(2, 7), (3, 8), (5, 6), (6, 5), (7, 1)])
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.level) {
            return Err(Error::InvalidNoiseSpec(format!(
                "level {} outside [0, 1]",
                self.level
            )));
        }
        if classes == 0 {
            return Err(Error::InvalidNoiseSpec("zero classes".into()));
        }
        if self.kind != NoiseKind::PairFlip {
            return Ok(());
        }
        if self.pairs.is_empty() {
            return Err(Error::InvalidNoiseSpec("pair_flip needs at least one pair".into()));
        }
        let mut seen = vec![false; classes];
        for p in &self.pairs {
            if p.source >= classes || p.target >= classes {
                return Err(Error::InvalidNoiseSpec(format!(
                    "pair {}→{} out of range for {classes} classes",
                    p.source, p.target
                )));
            }
            if p.source == p.target {
                return Err(Error::InvalidNoiseSpec(format!(
                    "pair {}→{} flips a class onto itself",
                    p.source, p.target
                )));
            }
            if std::mem::replace(&mut seen[p.source], true) {
                return Err(Error::InvalidNoiseSpec(format!(
                    "class {} appears twice as a source",
                    p.source
                )));
            }
            if let Some(level) = p.level {
                if !in_unit(level) {
                    return Err(Error::InvalidNoiseSpec(format!(
                        "pair level {level} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self, classes: usize) -> Result<NoiseMatrix> {
        self.validate(classes)?;
        let c = classes;
        let mut m = DenseMatrix::identity(c);
        match self.kind {
            NoiseKind::Identity => {}
            NoiseKind::Symmetric => {
                if c > 1 {
                    let off = self.level / (c - 1) as f64;
                    for i in 0..c {
                        for j in 0..c {
                            m.set(i, j, if i == j { 1.0 - self.level } else { off });
                        }
                    }
                }
            }
            NoiseKind::PairFlip => {
                for p in &self.pairs {
                    let level = p.level.unwrap_or(self.level);
                    m.set(p.source, p.source, 1.0 - level);
                    m.set(p.source, p.target, level);
                }
            }
        }
        NoiseMatrix::new(m)
    }
}

/// Divides each row by its sum.
pub fn row_normalize(m: &DenseMatrix) -> Result<NoiseMatrix> {
    if let Some(v) = m.as_slice().iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "negative entry {v} in matrix to normalise"
        )));
    }
    let mut out = m.clone();
    for r in 0..m.rows() {
        let sum: f64 = m.row(r).iter().sum();
        if sum <= 0.0 {
            return Err(Error::ZeroRow { row: r });
        }
        for c in 0..m.cols() {
            out.set(r, c, m.get(r, c) / sum);
        }
    }
    NoiseMatrix::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
        m.to_rows()
    }

    #[test]
    fn mnist_pair_flip_matches_reference_matrix() {
        let t = NoiseSpec::mnist_pairs(0.7).build(10).unwrap();
        #[rustfmt::skip]
        let expected: [[f64; 10]; 10] = [
            [1., 0., 0., 0., 0., 0., 0., 0., 0., 0.],
            [0., 1., 0., 0., 0., 0., 0., 0., 0., 0.],
            [0., 0., 0.3, 0., 0., 0., 0., 0.7, 0., 0.],
            [0., 0., 0., 0.3, 0., 0., 0., 0., 0.7, 0.],
            [0., 0., 0., 0., 1., 0., 0., 0., 0., 0.],
            [0., 0., 0., 0., 0., 0.3, 0.7, 0., 0., 0.],
            [0., 0., 0., 0., 0., 0.7, 0.3, 0., 0., 0.],
            [0., 0.7, 0., 0., 0., 0., 0., 0.3, 0., 0.],
            [0., 0., 0., 0., 0., 0., 0., 0., 1., 0.],
            [0., 0., 0., 0., 0., 0., 0., 0., 0., 1.],
        ];
        for i in 0..10 {
            for j in 0..10 {
                assert!((t.get(i, j) - expected[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn zero_level_is_identity() {
        for spec in [
            NoiseSpec::identity(),
            NoiseSpec::symmetric(0.0),
            NoiseSpec::mnist_pairs(0.0),
        ] {
            assert_eq!(spec.build(10).unwrap(), NoiseMatrix::identity(10));
        }
    }

    #[test]
    fn symmetric_two_class() {
        let t = NoiseSpec::symmetric(0.2).build(2).unwrap();
        assert_eq!(rows(t.matrix()), vec![vec![0.8, 0.2], vec![0.2, 0.8]]);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(NoiseSpec::pair_flip(0.3, &[(0, 5)]).build(3).is_err());
        assert!(NoiseSpec::pair_flip(0.3, &[(0, 1), (0, 2)]).build(3).is_err());
        assert!(NoiseSpec::pair_flip(0.3, &[(1, 1)]).build(3).is_err());
        assert!(NoiseSpec::symmetric(1.5).build(3).is_err());
    }

    #[test]
    fn per_pair_level_overrides() {
        // binary scheme: 0→1 fixed at 5%, 1→0 at the global level
        let spec = NoiseSpec {
            kind: NoiseKind::PairFlip,
            level: 0.4,
            pairs: vec![
                FlipPair {
                    source: 0,
                    target: 1,
                    level: Some(0.05),
                },
                FlipPair::new(1, 0),
            ],
        };
        let t = spec.build(2).unwrap();
        assert_eq!(rows(t.matrix()), vec![vec![0.95, 0.05], vec![0.4, 0.6]]);
    }

    #[test]
    fn corrupt_identity_and_deterministic_flip() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        assert_eq!(NoiseMatrix::identity(4).corrupt(&labels, 9).unwrap(), labels);

        let t = NoiseSpec::pair_flip(1.0, &[(0, 1)]).build(3).unwrap();
        let noisy = t.corrupt(&[0; 50], 1).unwrap();
        assert!(noisy.iter().all(|&y| y == 1));
    }

    #[test]
    fn corrupt_frequencies_match_row() {
        let t = NoiseSpec::symmetric(0.3).build(3).unwrap();
        let noisy = t.corrupt(&vec![0; 100_000], 2024).unwrap();
        let mut counts = [0usize; 3];
        for y in noisy {
            counts[y] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|&k| k as f64 / 100_000.0).collect();
        for (f, want) in freq.iter().zip([0.7, 0.15, 0.15]) {
            assert!((f - want).abs() < 0.01, "{freq:?}");
        }
    }

    #[test]
    fn corrupt_rejects_out_of_range() {
        assert!(NoiseMatrix::identity(2).corrupt(&[0, 2], 0).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(
            NoiseMatrix::identity(3).inverse(0.0).unwrap(),
            DenseMatrix::identity(3)
        );
        let t = NoiseSpec::symmetric(0.2).build(2).unwrap();
        let inv = t.inverse(0.0).unwrap();
        let want =
            DenseMatrix::from_rows(&[vec![0.8 / 0.6, -0.2 / 0.6], vec![-0.2 / 0.6, 0.8 / 0.6]])
                .unwrap();
        assert!(inv.max_abs_diff(&want) < 1e-14);

        let half = NoiseSpec::symmetric(0.5).build(2).unwrap();
        assert!(matches!(half.inverse(0.0), Err(Error::SingularMatrix { .. })));
        let mixed = half.inverse(0.1).unwrap();
        let prod = mixed.matmul(&half.mixed(0.1)).unwrap();
        assert!(prod.max_abs_diff(&DenseMatrix::identity(2)) < 1e-12);
    }

    #[test]
    fn row_normalize_examples() {
        let m = DenseMatrix::from_rows(&[vec![2., 2.], vec![1., 3.]]).unwrap();
        let t = row_normalize(&m).unwrap();
        assert_eq!(rows(t.matrix()), vec![vec![0.5, 0.5], vec![0.25, 0.75]]);

        let s = NoiseSpec::mnist_pairs(0.6).build(10).unwrap();
        let again = row_normalize(s.matrix()).unwrap();
        assert!(again.matrix().max_abs_diff(s.matrix()) < 1e-12);

        let degenerate = DenseMatrix::from_rows(&[vec![0., 0.], vec![1., 1.]]).unwrap();
        assert!(matches!(
            row_normalize(&degenerate),
            Err(Error::ZeroRow { row: 0 })
        ));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let t = NoiseSpec::symmetric(0.3).build(7).unwrap();
        let back = NoiseMatrix::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn invalid_matrices_rejected() {
        let bad = DenseMatrix::from_rows(&[vec![0.5, 0.6], vec![0.5, 0.5]]).unwrap();
        assert!(NoiseMatrix::new(bad).is_err());
        let neg = DenseMatrix::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]]).unwrap();
        assert!(NoiseMatrix::new(neg).is_err());
    }

    fn arb_spec() -> impl Strategy<Value = (NoiseSpec, usize)> {
        (2usize..12, 0f64..=1.0, 0u8..3, any::<u64>()).prop_map(|(c, level, kind, seed)| {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = match kind {
                0 => NoiseSpec::identity(),
                1 => NoiseSpec::symmetric(level),
                _ => {
                    let mut sources: Vec<usize> = (0..c).collect();
                    sources.shuffle(&mut rng);
                    let k = rng.gen_range(1..=c);
                    let pairs: Vec<(usize, usize)> = sources[..k]
                        .iter()
                        .map(|&s| (s, (s + rng.gen_range(1..c)) % c))
                        .collect();
                    NoiseSpec::pair_flip(level, &pairs)
                }
            };
            (spec, c)
        })
    }

    proptest! {
        #[test]
        fn built_matrices_are_row_stochastic((spec, c) in arb_spec()) {
            let t = spec.build(c).unwrap();
            for r in 0..c {
                let s: f64 = t.row(r).iter().sum();
                prop_assert!((s - 1.0).abs() < ROW_SUM_TOL);
                prop_assert!(t.row(r).iter().all(|v| (0.0..=1.0).contains(v)));
            }
            if spec.kind == NoiseKind::Symmetric {
                for col in 0..c {
                    let s: f64 = (0..c).map(|r| t.get(r, col)).sum();
                    prop_assert!((s - 1.0).abs() < ROW_SUM_TOL);
                }
            }
        }

        #[test]
        fn corrupt_is_reproducible((spec, c) in arb_spec(), seed in any::<u64>()) {
            let t = spec.build(c).unwrap();
            let labels: Vec<usize> = (0..200).map(|i| i % c).collect();
            prop_assert_eq!(t.corrupt(&labels, seed).unwrap(), t.corrupt(&labels, seed).unwrap());
        }

        #[test]
        fn inverse_times_t_is_identity(c in 2usize..10, level in 0f64..0.4) {
            let t = NoiseSpec::symmetric(level).build(c).unwrap();
            let inv = t.inverse_with_condition(0.0).unwrap();
            prop_assume!(inv.condition < 1e6);
            let prod = inv.matrix.matmul(t.matrix()).unwrap();
            prop_assert!(prod.max_abs_diff(&DenseMatrix::identity(c)) < 1e-8);
        }
    }
}
