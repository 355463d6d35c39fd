//! Frobenius algebras over the exact rationals.
//!
//! An algebra is given by an ordered basis B, structure constants for the
//! product, a trace vector, and an optional partition of B into components
//! B_1 u ... u B_n. Construction validates everything eagerly:
//! associativity, unitality, symmetry of the trace, invertibility of the
//! Gram matrix [tr(ab)], and vanishing of cross-component products. The left
//! dual basis {b_check} with tr(a_check b) = delta_{a,b} is computed once by
//! inverting the Gram matrix and stored.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::scalar::{fmt_scalar, int, invert_matrix, one, zero, Scalar};

pub type Coords = Vec<Scalar>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("product is not associative: ({0} * {1}) * {2} != {0} * ({1} * {2})")]
    NotAssociative(String, String, String),
    #[error("unit is not a unit on basis element {0}")]
    NotUnital(String),
    #[error("trace is not symmetric: tr({0} * {1}) != tr({1} * {0})")]
    TraceNotSymmetric(String, String),
    #[error("trace form is degenerate: Gram matrix [tr(a*b)] is singular")]
    TraceDegenerate,
    #[error("cross-component product is nonzero: {0} * {1} with components {2} and {3}")]
    CrossComponentProductNonzero(String, String, usize, usize),
    #[error("elements belong to different algebras")]
    AlgebraMismatch,
    #[error("component index {0} out of range (algebra has {1} components)")]
    ComponentOutOfRange(usize, usize),
    #[error("malformed algebra description: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct AlgebraData {
    labels: Vec<String>,
    /// mult[a][b] = coordinates of (basis a) * (basis b)
    mult: Vec<Vec<Coords>>,
    unit: Coords,
    trace: Vec<Scalar>,
    /// component index per basis element, 0-based; all zero when unpartitioned
    component: Vec<usize>,
    n_components: usize,
    /// dual[b] = coordinates of the left dual basis vector b_check
    dual: Vec<Coords>,
    /// coordinates of e_i = 1_{F_i}
    component_units: Vec<Coords>,
}

/// A validated Frobenius algebra. Cheap to clone (shared immutable data).
#[derive(Clone, PartialEq, Eq)]
pub struct FrobeniusAlgebra {
    data: Arc<AlgebraData>,
}

impl fmt::Debug for FrobeniusAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FrobeniusAlgebra({})", self.data.labels.join(","))
    }
}

impl FrobeniusAlgebra {
    /// Build and validate an algebra from raw tables.
    ///
    /// `mult[a][b]` must give the coordinates of the product of basis
    /// elements a and b; `unit` the coordinates of 1; `trace[b]` the trace of
    /// basis element b. `partition`, when present, assigns each basis element
    /// a 0-based component index.
    pub fn build(
        labels: Vec<String>,
        mult: Vec<Vec<Coords>>,
        unit: Coords,
        trace: Vec<Scalar>,
        partition: Option<Vec<usize>>,
    ) -> Result<Self, AlgebraError> {
        let dim = labels.len();
        let check_len = |v: &Coords| v.len() == dim;
        if mult.len() != dim
            || mult.iter().any(|row| row.len() != dim || row.iter().any(|c| !check_len(c)))
            || !check_len(&unit)
            || trace.len() != dim
        {
            return Err(AlgebraError::Malformed(
                "table sizes do not match the basis".into(),
            ));
        }
        let component = partition.unwrap_or_else(|| vec![0; dim]);
        if component.len() != dim {
            return Err(AlgebraError::Malformed(
                "partition length does not match the basis".into(),
            ));
        }
        let n_components = component.iter().copied().max().map_or(1, |m| m + 1);

        let mul = |x: &Coords, y: &Coords| -> Coords {
            let mut out = vec![zero(); dim];
            for (a, xa) in x.iter().enumerate() {
                if xa == &zero() {
                    continue;
                }
                for (b, yb) in y.iter().enumerate() {
                    if yb == &zero() {
                        continue;
                    }
                    for (c, m) in mult[a][b].iter().enumerate() {
                        out[c] += xa * yb * m;
                    }
                }
            }
            out
        };
        let basis_vec = |i: usize| -> Coords {
            let mut v = vec![zero(); dim];
            v[i] = one();
            v
        };

        // Unitality on every basis element.
        for i in 0..dim {
            let b = basis_vec(i);
            if mul(&unit, &b) != b || mul(&b, &unit) != b {
                return Err(AlgebraError::NotUnital(labels[i].clone()));
            }
        }
        // Associativity on all basis triples.
        for a in 0..dim {
            for b in 0..dim {
                for c in 0..dim {
                    let ab_c = mul(&mult[a][b], &basis_vec(c));
                    let a_bc = mul(&basis_vec(a), &mult[b][c]);
                    if ab_c != a_bc {
                        return Err(AlgebraError::NotAssociative(
                            labels[a].clone(),
                            labels[b].clone(),
                            labels[c].clone(),
                        ));
                    }
                }
            }
        }
        let tr_of = |v: &Coords| -> Scalar {
            v.iter().zip(&trace).map(|(c, t)| c * t).sum()
        };
        // Symmetry of the trace form.
        for a in 0..dim {
            for b in 0..dim {
                if tr_of(&mult[a][b]) != tr_of(&mult[b][a]) {
                    return Err(AlgebraError::TraceNotSymmetric(
                        labels[a].clone(),
                        labels[b].clone(),
                    ));
                }
            }
        }
        // Cross-component products must vanish.
        for a in 0..dim {
            for b in 0..dim {
                if component[a] != component[b] && mult[a][b].iter().any(|c| c != &zero()) {
                    return Err(AlgebraError::CrossComponentProductNonzero(
                        labels[a].clone(),
                        labels[b].clone(),
                        component[a],
                        component[b],
                    ));
                }
            }
        }
        // Gram matrix and dual basis. gram[a][b] = tr(a * b); the left dual
        // basis satisfies tr(a_check * b) = delta, so a_check = sum_c inv[b?]..
        let gram: Vec<Vec<Scalar>> = (0..dim)
            .map(|a| (0..dim).map(|b| tr_of(&mult[a][b])).collect())
            .collect();
        let gram_inv = invert_matrix(&gram).ok_or(AlgebraError::TraceDegenerate)?;
        // b_check = sum_a (G^{-1})[b][a] * a gives tr(b_check * c) = delta_{b,c}.
        let dual: Vec<Coords> = (0..dim).map(|b| gram_inv[b].clone()).collect();

        // Component units: e_i = restriction of 1 to component i.
        let mut component_units = vec![vec![zero(); dim]; n_components];
        for (b, &comp) in component.iter().enumerate() {
            component_units[comp][b] = unit[b].clone();
        }

        let alg = FrobeniusAlgebra {
            data: Arc::new(AlgebraData {
                labels,
                mult,
                unit,
                trace,
                component,
                n_components,
                dual,
                component_units,
            }),
        };
        // Sanity: tr(a_check * b) = delta (guards the dual-basis orientation).
        for a in 0..dim {
            for b in 0..dim {
                let expect = if a == b { one() } else { zero() };
                debug_assert_eq!(
                    alg.trace_of(&alg.mul_coords(&alg.data.dual[a], &basis_vec(b))),
                    expect
                );
            }
        }
        Ok(alg)
    }

    pub fn dim(&self) -> usize {
        self.data.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.data.labels
    }

    pub fn label(&self, b: usize) -> &str {
        &self.data.labels[b]
    }

    pub fn n_components(&self) -> usize {
        self.data.n_components
    }

    pub fn is_partitioned(&self) -> bool {
        self.data.n_components > 1
    }

    /// Component index of basis element `b`.
    pub fn component_of(&self, b: usize) -> usize {
        self.data.component[b]
    }

    /// Basis indices belonging to component `i`.
    pub fn component_basis(&self, i: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&b| self.data.component[b] == i).collect()
    }

    pub fn unit_coords(&self) -> &Coords {
        &self.data.unit
    }

    /// Coordinates of the idempotent e_i = 1_{F_i}.
    pub fn idempotent_coords(&self, i: usize) -> Result<&Coords, AlgebraError> {
        self.data
            .component_units
            .get(i)
            .ok_or(AlgebraError::ComponentOutOfRange(i, self.data.n_components))
    }

    pub fn trace_of(&self, v: &Coords) -> Scalar {
        v.iter().zip(&self.data.trace).map(|(c, t)| c * t).sum()
    }

    pub fn mul_coords(&self, x: &Coords, y: &Coords) -> Coords {
        let dim = self.dim();
        let mut out = vec![zero(); dim];
        for (a, xa) in x.iter().enumerate() {
            if xa == &zero() {
                continue;
            }
            for (b, yb) in y.iter().enumerate() {
                if yb == &zero() {
                    continue;
                }
                for (c, m) in self.data.mult[a][b].iter().enumerate() {
                    out[c] += xa * yb * m;
                }
            }
        }
        out
    }

    pub fn basis_coords(&self, b: usize) -> Coords {
        let mut v = vec![zero(); self.dim()];
        v[b] = one();
        v
    }

    /// Coordinates of the left dual basis vector b_check.
    pub fn dual_coords(&self, b: usize) -> &Coords {
        &self.data.dual[b]
    }

    pub fn element(&self, coords: Coords) -> AlgebraElement {
        assert_eq!(coords.len(), self.dim());
        AlgebraElement { algebra: self.clone(), coords }
    }

    pub fn basis_element(&self, b: usize) -> AlgebraElement {
        self.element(self.basis_coords(b))
    }

    pub fn unit(&self) -> AlgebraElement {
        self.element(self.data.unit.clone())
    }

    pub fn zero_element(&self) -> AlgebraElement {
        self.element(vec![zero(); self.dim()])
    }

    pub fn idempotent(&self, i: usize) -> Result<AlgebraElement, AlgebraError> {
        Ok(self.element(self.idempotent_coords(i)?.clone()))
    }

    /// The left dual basis as elements, in basis order.
    pub fn dual_basis(&self) -> Vec<AlgebraElement> {
        (0..self.dim()).map(|b| self.element(self.data.dual[b].clone())).collect()
    }

    /// Restrict an element's coordinates to component `i` (f e_i).
    pub fn project_coords(&self, v: &Coords, i: usize) -> Coords {
        v.iter()
            .enumerate()
            .map(|(b, c)| if self.data.component[b] == i { c.clone() } else { zero() })
            .collect()
    }

    /// Direct sum, concatenating bases and adding traces componentwise.
    /// Components of the summands are flattened: the partition of the result
    /// has one component per summand.
    pub fn direct_sum(components: &[FrobeniusAlgebra]) -> Result<Self, AlgebraError> {
        if components.is_empty() {
            return Err(AlgebraError::Malformed("direct sum of zero algebras".into()));
        }
        let dim: usize = components.iter().map(|a| a.dim()).sum();
        let mut labels = Vec::with_capacity(dim);
        let mut unit = vec![zero(); dim];
        let mut trace = vec![zero(); dim];
        let mut partition = Vec::with_capacity(dim);
        let mut mult = vec![vec![vec![zero(); dim]; dim]; dim];
        let mut offset = 0usize;
        for (ci, alg) in components.iter().enumerate() {
            let d = alg.dim();
            for b in 0..d {
                labels.push(format!("{}", alg.data.labels[b]));
                unit[offset + b] = alg.data.unit[b].clone();
                trace[offset + b] = alg.data.trace[b].clone();
                partition.push(ci);
            }
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        mult[offset + a][offset + b][offset + c] = alg.data.mult[a][b][c].clone();
                    }
                }
            }
            offset += d;
        }
        // Disambiguate duplicate labels across summands.
        let mut seen = std::collections::HashMap::new();
        for (i, l) in labels.iter_mut().enumerate() {
            let count = seen.entry(l.clone()).or_insert(0usize);
            *count += 1;
            if *count > 1 {
                *l = format!("{}_{}", l, partition[i] + 1);
            }
        }
        Self::build(labels, mult, unit, trace, Some(partition))
    }

    /// Extract component `i` as a standalone Frobenius algebra, together with
    /// the embedding of its basis indices into this algebra.
    pub fn component_algebra(&self, i: usize) -> Result<(FrobeniusAlgebra, Vec<usize>), AlgebraError> {
        if i >= self.data.n_components {
            return Err(AlgebraError::ComponentOutOfRange(i, self.data.n_components));
        }
        let idx = self.component_basis(i);
        let d = idx.len();
        let labels = idx.iter().map(|&b| self.data.labels[b].clone()).collect();
        let mut mult = vec![vec![vec![zero(); d]; d]; d];
        for (a2, &a) in idx.iter().enumerate() {
            for (b2, &b) in idx.iter().enumerate() {
                for (c2, &c) in idx.iter().enumerate() {
                    mult[a2][b2][c2] = self.data.mult[a][b][c].clone();
                }
            }
        }
        let unit = idx.iter().map(|&b| self.data.unit[b].clone()).collect();
        let trace = idx.iter().map(|&b| self.data.trace[b].clone()).collect();
        let alg = Self::build(labels, mult, unit, trace, None)?;
        Ok((alg, idx))
    }

    /// Find a basis element by label.
    pub fn basis_index(&self, label: &str) -> Option<usize> {
        self.data.labels.iter().position(|l| l == label)
    }

    pub fn fmt_coords(&self, v: &Coords) -> String {
        let mut parts = Vec::new();
        for (b, c) in v.iter().enumerate() {
            if c == &zero() {
                continue;
            }
            if c == &one() {
                parts.push(self.data.labels[b].clone());
            } else {
                parts.push(format!("{}*{}", fmt_scalar(c), self.data.labels[b]));
            }
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ")
        }
    }
}

/// An element of a Frobenius algebra: a coordinate vector plus its owner.
#[derive(Clone, PartialEq, Eq)]
pub struct AlgebraElement {
    pub algebra: FrobeniusAlgebra,
    pub coords: Coords,
}

impl fmt::Debug for AlgebraElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.algebra.fmt_coords(&self.coords))
    }
}

impl AlgebraElement {
    pub fn multiply(&self, other: &AlgebraElement) -> Result<AlgebraElement, AlgebraError> {
        if self.algebra != other.algebra {
            return Err(AlgebraError::AlgebraMismatch);
        }
        Ok(AlgebraElement {
            algebra: self.algebra.clone(),
            coords: self.algebra.mul_coords(&self.coords, &other.coords),
        })
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<AlgebraElement, AlgebraError> {
        if self.algebra != other.algebra {
            return Err(AlgebraError::AlgebraMismatch);
        }
        Ok(AlgebraElement {
            algebra: self.algebra.clone(),
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn scale(&self, s: &Scalar) -> AlgebraElement {
        AlgebraElement {
            algebra: self.algebra.clone(),
            coords: self.coords.iter().map(|c| c * s).collect(),
        }
    }

    pub fn trace(&self) -> Scalar {
        self.algebra.trace_of(&self.coords)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c == &zero())
    }
}

/// The one-dimensional algebra: basis {1}, tr(1) = 1.
pub fn ground_field() -> FrobeniusAlgebra {
    FrobeniusAlgebra::build(
        vec!["1".into()],
        vec![vec![vec![one()]]],
        vec![one()],
        vec![one()],
        None,
    )
    .expect("ground field is a Frobenius algebra")
}

/// k[x]/(x^2) with tr(1) = 0, tr(x) = 1.
pub fn dual_numbers() -> FrobeniusAlgebra {
    FrobeniusAlgebra::build(
        vec!["1".into(), "x".into()],
        vec![
            vec![vec![one(), zero()], vec![zero(), one()]],
            vec![vec![zero(), one()], vec![zero(), zero()]],
        ],
        vec![one(), zero()],
        vec![zero(), one()],
        None,
    )
    .expect("dual numbers form a Frobenius algebra")
}

/// Direct sum of `n` copies of the ground field.
pub fn split_field(n: usize) -> FrobeniusAlgebra {
    let parts: Vec<_> = (0..n).map(|_| ground_field()).collect();
    FrobeniusAlgebra::direct_sum(&parts).expect("split field")
}

/// The test fleet used throughout: k, k+k, k[x]/(x^2), k[x]/(x^2)+k, k+k+k.
pub fn fleet() -> Vec<(String, FrobeniusAlgebra)> {
    vec![
        ("k".into(), ground_field()),
        ("k+k".into(), split_field(2)),
        ("k[x]/(x^2)".into(), dual_numbers()),
        (
            "k[x]/(x^2)+k".into(),
            FrobeniusAlgebra::direct_sum(&[dual_numbers(), ground_field()]).unwrap(),
        ),
        ("k+k+k".into(), split_field(3)),
    ]
}

pub fn scalar_int(n: i64) -> Scalar {
    int(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, ratio};

    #[test]
    fn ground_field_is_valid() {
        let k = ground_field();
        assert_eq!(k.dim(), 1);
        // dual basis of {1} with tr(1)=1 is {1}
        assert_eq!(k.dual_coords(0), &vec![one()]);
    }

    #[test]
    fn dual_numbers_axioms_and_duals() {
        let a = dual_numbers();
        // x*x = 0
        let x = a.basis_element(1);
        assert!(x.multiply(&x).unwrap().is_zero());
        // Gram matrix [[0,1],[1,0]] inverts to itself: 1_check = x, x_check = 1.
        assert_eq!(a.dual_coords(0), &vec![zero(), one()]);
        assert_eq!(a.dual_coords(1), &vec![one(), zero()]);
    }

    #[test]
    fn degenerate_trace_is_rejected() {
        // basis {1,x}, x*x=0, tr = 0 identically: zero Gram matrix.
        let err = FrobeniusAlgebra::build(
            vec!["1".into(), "x".into()],
            vec![
                vec![vec![one(), zero()], vec![zero(), one()]],
                vec![vec![zero(), one()], vec![zero(), zero()]],
            ],
            vec![one(), zero()],
            vec![zero(), zero()],
            None,
        )
        .unwrap_err();
        assert_eq!(err, AlgebraError::TraceDegenerate);
    }

    #[test]
    fn non_associative_is_rejected() {
        // basis {1,a,b} with a*a = b, a*b = 1, b*a = 0: (a a) a = 0 but
        // a (a a) = 1
        let z3 = || vec![zero(), zero(), zero()];
        let e = |i: usize| {
            let mut v = z3();
            v[i] = one();
            v
        };
        let err = FrobeniusAlgebra::build(
            vec!["1".into(), "a".into(), "b".into()],
            vec![
                vec![e(0), e(1), e(2)],
                vec![e(1), e(2), e(0)],
                vec![e(2), z3(), z3()],
            ],
            vec![one(), zero(), zero()],
            vec![one(), zero(), zero()],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, AlgebraError::NotAssociative(..)));
    }

    #[test]
    fn split_field_idempotents() {
        let a = split_field(2);
        let e1 = a.idempotent(0).unwrap();
        let e2 = a.idempotent(1).unwrap();
        assert!(e1.multiply(&e2).unwrap().is_zero());
        assert_eq!(e1.multiply(&e1).unwrap(), e1);
        let unit = e1.add(&e2).unwrap();
        assert_eq!(unit, a.unit());
        // tr(e_i) = 1, Gram is the identity, so e_check = e.
        assert_eq!(a.dual_coords(0), &a.basis_coords(0));
    }

    #[test]
    fn direct_sum_block_duals() {
        let a = FrobeniusAlgebra::direct_sum(&[dual_numbers(), ground_field()]).unwrap();
        assert_eq!(a.dim(), 3);
        assert_eq!(a.n_components(), 2);
        // per-block dual basis: block 1 swaps 1 <-> x, block 2 fixes 1.
        assert_eq!(a.dual_coords(0), &vec![zero(), one(), zero()]);
        assert_eq!(a.dual_coords(1), &vec![one(), zero(), zero()]);
        assert_eq!(a.dual_coords(2), &vec![zero(), zero(), one()]);
    }

    #[test]
    fn dual_basis_reconstruction() {
        // sum_b tr(f b) b_check = f for all test algebras and basis f.
        for (_, alg) in fleet() {
            for f in 0..alg.dim() {
                let fv = alg.basis_coords(f);
                let mut acc = vec![zero(); alg.dim()];
                for b in 0..alg.dim() {
                    let t = alg.trace_of(&alg.mul_coords(&fv, &alg.basis_coords(b)));
                    for (i, d) in alg.dual_coords(b).iter().enumerate() {
                        acc[i] += &t * d;
                    }
                }
                assert_eq!(acc, fv, "reconstruction failed in {:?}", alg);
            }
        }
    }

    #[test]
    fn projection_and_idempotent_conjugation() {
        let a = FrobeniusAlgebra::direct_sum(&[dual_numbers(), ground_field()]).unwrap();
        let f = a.element(vec![int(2), ratio(1, 2), int(-3)]);
        for i in 0..2 {
            let e = a.idempotent(i).unwrap();
            let efe = e.multiply(&f).unwrap().multiply(&e).unwrap();
            assert_eq!(efe.coords, a.project_coords(&f.coords, i));
        }
    }
}
