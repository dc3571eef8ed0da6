//! Space-filling designs on the unit hypercube.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BITS: usize = 32;

/// Primitive polynomials (degree s, interior coefficients a) and initial
/// direction numbers for dimensions 2..=21 of the Joe–Kuo table.
const DIRECTIONS: [(usize, u32, &[u32]); 20] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
];

/// Largest dimension supported by [`Sobol`].
pub const SOBOL_MAX_DIM: usize = DIRECTIONS.len() + 1;

/// Unscrambled Sobol sequence in Gray-code order, starting at the origin.
#[derive(Clone, Debug)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > SOBOL_MAX_DIM {
            return Err(Error::InvalidParameter(format!("Sobol dimension must be in 1..={SOBOL_MAX_DIM}, got {dim}")));
        }
        let mut directions = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (i, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - i);
        }
        directions.push(first);
        for &(s, a, init) in DIRECTIONS.iter().take(dim - 1) {
            let mut m: Vec<u32> = init.to_vec();
            for i in s..BITS {
                let mut v = m[i - s] ^ (m[i - s] << s);
                for k in 1..s {
                    if (a >> (s - 1 - k)) & 1 == 1 {
                        v ^= m[i - k] << k;
                    }
                }
                m.push(v);
            }
            let mut row = [0u32; BITS];
            for (i, r) in row.iter_mut().enumerate() {
                *r = m[i] << (BITS - 1 - i);
            }
            directions.push(row);
        }
        Ok(Self { directions, state: vec![0; dim], index: 0 })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Returns the current term and advances.
    pub fn next_point(&mut self) -> Vec<f64> {
        let scale = 1.0 / (1u64 << BITS) as f64;
        let out = self.state.iter().map(|&s| s as f64 * scale).collect();
        let c = self.index.trailing_ones() as usize;
        for (s, dir) in self.state.iter_mut().zip(&self.directions) {
            *s ^= dir[c.min(BITS - 1)];
        }
        self.index += 1;
        out
    }

    /// Skips `n` terms.
    pub fn skip(&mut self, n: usize) {
        for _ in 0..n {
            self.next_point();
        }
    }
}

/// `n` Sobol points after dropping the first `skip` terms.
pub fn sobol_points(n: usize, dim: usize, skip: usize) -> Result<Vec<Vec<f64>>> {
    let mut s = Sobol::new(dim)?;
    s.skip(skip);
    Ok((0..n).map(|_| s.next_point()).collect())
}

/// Latin hypercube sample: every one-dimensional projection has exactly one
/// point in each interval `[j/p, (j+1)/p)`.
pub fn latin_hypercube<R: Rng + ?Sized>(p: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; p];
    let mut perm: Vec<usize> = (0..p).collect();
    for j in 0..dim {
        perm.shuffle(rng);
        for (i, point) in points.iter_mut().enumerate() {
            let v = (perm[i] as f64 + rng.gen::<f64>()) / p as f64;
            // Guard against rounding up onto the next stratum's boundary.
            point[j] = v.min((perm[i] + 1) as f64 / p as f64 - f64::EPSILON).max(0.0);
        }
    }
    points
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    #[default]
    Lhs,
    Sobol,
}

/// `p` initial points in `[0, 1]^dim`. Sobol designs skip the origin and do
/// not touch `rng`.
pub fn initial_design<R: Rng + ?Sized>(kind: DesignKind, p: usize, dim: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if p == 0 || dim == 0 {
        return Err(Error::InvalidParameter("initial design needs p >= 1 and dim >= 1".into()));
    }
    match kind {
        DesignKind::Lhs => Ok(latin_hypercube(p, dim, rng)),
        DesignKind::Sobol => sobol_points(p, dim, 1),
    }
}
