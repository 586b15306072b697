use nalgebra::{DMatrix, DVector};

/// Dense three-index array over frame indices, stored row-major as `[i][j][k]`.
///
/// Used for bracket coefficients `c[i][j][k] = c^k_{ij}`, Levi-Civita
/// coefficients, the intrinsic torsion `T(X,Y,Z) = <xi_X Y, Z>` and
/// vector-valued two-forms `t(E_i,E_j) = sum_k t[i][j][k] E_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

/// Vector-valued two-form `t(E_i, E_j) = sum_k t[i][j][k] E_k`.
pub type VectorValuedTwoForm = Tensor3;

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Tensor3 {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    t.data[(i * dim + j) * dim + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim * dim);
        Tensor3 { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.dim + j) * self.dim + k] += v;
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Tensor3) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> Tensor3 {
        Tensor3 {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Tensor3) -> Tensor3 {
        Tensor3 {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Tensor3) -> Tensor3 {
        Tensor3 {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `T'(X,Y,Z) = T(aX, bY, cZ)`.
    pub fn pull_back(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Tensor3 {
        let d = self.dim;
        // contract one slot at a time
        let mut s1 = Tensor3::zeros(d);
        for p in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let v = self.get(p, j, k);
                    if v == 0.0 {
                        continue;
                    }
                    for i in 0..d {
                        s1.add_at(i, j, k, a[(p, i)] * v);
                    }
                }
            }
        }
        let mut s2 = Tensor3::zeros(d);
        for i in 0..d {
            for q in 0..d {
                for k in 0..d {
                    let v = s1.get(i, q, k);
                    if v == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        s2.add_at(i, j, k, b[(q, j)] * v);
                    }
                }
            }
        }
        let mut s3 = Tensor3::zeros(d);
        for i in 0..d {
            for j in 0..d {
                for r in 0..d {
                    let v = s2.get(i, j, r);
                    if v == 0.0 {
                        continue;
                    }
                    for k in 0..d {
                        s3.add_at(i, j, k, c[(r, k)] * v);
                    }
                }
            }
        }
        s3
    }

    /// `T(x, y, z)` for arbitrary frame vectors.
    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                if y[j] == 0.0 {
                    continue;
                }
                let xy = x[i] * y[j];
                for k in 0..d {
                    s += xy * z[k] * self.get(i, j, k);
                }
            }
        }
        s
    }

    /// Vector `sum_k t(x, y, E_k) E_k`, i.e. the value of a vector-valued
    /// two-form, or `xi_x y` for a torsion tensor.
    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        let mut out = DVector::zeros(d);
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                for k in 0..d {
                    out[k] += xy * self.get(i, j, k);
                }
            }
        }
        out
    }

    /// Matrix of the map `Y -> sum_k T(x, Y, E_k) E_k`, entry `[k][j]`.
    pub fn slot_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim;
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                for k in 0..d {
                    m[(k, j)] += x[i] * self.get(i, j, k);
                }
            }
        }
        m
    }

    /// Largest violation of antisymmetry in the first two slots.
    pub fn first_pair_asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    worst = worst.max((self.get(i, j, k) + self.get(j, i, k)).abs());
                }
            }
        }
        worst
    }

    /// Largest violation of antisymmetry in the last two slots.
    pub fn last_pair_asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    worst = worst.max((self.get(i, j, k) + self.get(i, k, j)).abs());
                }
            }
        }
        worst
    }
}
