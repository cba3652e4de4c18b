//! Lie-algebra-valued differential forms on flat periodic grids.
//!
//! Components are collocated at grid points. A k-form stores, for every point
//! and every strictly increasing multi-index `I` of length k (lexicographic
//! order), one algebra element. The exterior derivative uses forward
//! differences; the codifferential is its exact adjoint under
//!
//! ```text
//! ⟨α, β⟩ = Σ_points Σ_I ⟨α_I, β_I⟩ · Π h_i
//! ```
//!
//! so `d∘d = 0` and discrete integration by parts hold to rounding, while the
//! Leibniz rule for the pointwise bracket-wedge only holds to `O(h)`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::LieAlgebra;
use crate::error::{Error, Result};

/// Periodic lattice on the flat torus `Π [0, L_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    sizes: Vec<usize>,
    periods: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    /// Unit-period grid with `sizes[i]` cells along axis `i`.
    pub fn new(sizes: &[usize]) -> Result<Self> {
        Self::with_periods(sizes, &vec![1.0; sizes.len()])
    }

    pub fn with_periods(sizes: &[usize], periods: &[f64]) -> Result<Self> {
        let n = sizes.len();
        if !(1..=4).contains(&n) {
            return Err(Error::Config(format!("base dimension {n} not in 1..=4")));
        }
        if periods.len() != n {
            return Err(Error::Config("one period per axis required".into()));
        }
        if let Some(s) = sizes.iter().find(|&&s| s < 4) {
            return Err(Error::Config(format!("grid axis with {s} cells, need >= 4")));
        }
        if periods.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config("periods must be positive".into()));
        }
        let mut strides = vec![1; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        Ok(Grid {
            sizes: sizes.to_vec(),
            periods: periods.to_vec(),
            strides,
        })
    }

    /// `n`-dimensional unit torus with `size` cells per axis.
    pub fn cube(n: usize, size: usize) -> Result<Self> {
        Self::new(&vec![size; n])
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.sizes[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).product()
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    /// Integer coordinate of point `p` along `axis`.
    #[inline]
    pub fn coord(&self, p: usize, axis: usize) -> usize {
        (p / self.strides[axis]) % self.sizes[axis]
    }

    /// Physical coordinates of point `p`.
    pub fn position(&self, p: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.coord(p, a) as f64 * self.spacing(a))
            .collect()
    }

    /// Periodic neighbour `p + e_axis`.
    #[inline]
    pub fn forward(&self, p: usize, axis: usize) -> usize {
        if self.coord(p, axis) + 1 == self.sizes[axis] {
            p + self.strides[axis] - self.sizes[axis] * self.strides[axis]
        } else {
            p + self.strides[axis]
        }
    }

    /// Periodic neighbour `p − e_axis`.
    #[inline]
    pub fn backward(&self, p: usize, axis: usize) -> usize {
        if self.coord(p, axis) == 0 {
            p + (self.sizes[axis] - 1) * self.strides[axis]
        } else {
            p - self.strides[axis]
        }
    }
}

/// Strictly increasing multi-indices of length `k` from `0..n`, lexicographic.
pub fn multi_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Sign of the permutation that sorts the concatenation `(a, b)`.
fn shuffle_sign(a: &[usize], b: &[usize]) -> f64 {
    let inversions = a.iter().map(|&x| b.iter().filter(|&&y| x > y).count()).sum::<usize>();
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn index_of(list: &[Vec<usize>], idx: &[usize]) -> usize {
    list.iter().position(|v| v == idx).expect("multi-index in table")
}

/// A `g`-valued k-form sampled on a grid.
#[derive(Clone, Debug)]
pub struct Form {
    grid: Grid,
    degree: usize,
    algebra: Arc<LieAlgebra>,
    data: Vec<f64>,
}

impl PartialEq for Form {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.degree == other.degree
            && self.algebra.label() == other.algebra.label()
            && self.data == other.data
    }
}

impl Form {
    pub fn zeros(grid: &Grid, degree: usize, algebra: &Arc<LieAlgebra>) -> Result<Self> {
        if degree > grid.dim() {
            return Err(Error::Degree(format!(
                "degree {degree} exceeds base dimension {}",
                grid.dim()
            )));
        }
        let len = grid.len() * binomial(grid.dim(), degree) * algebra.dim();
        Ok(Form {
            grid: grid.clone(),
            degree,
            algebra: Arc::clone(algebra),
            data: vec![0.0; len],
        })
    }

    /// Samples `f(x, component, algebra_index)` at every grid point.
    pub fn from_fn(
        grid: &Grid,
        degree: usize,
        algebra: &Arc<LieAlgebra>,
        f: impl Fn(&[f64], usize, usize) -> f64,
    ) -> Result<Self> {
        let mut out = Self::zeros(grid, degree, algebra)?;
        let (nc, d) = (out.num_components(), algebra.dim());
        for p in 0..grid.len() {
            let x = grid.position(p);
            for c in 0..nc {
                for a in 0..d {
                    out.data[(p * nc + c) * d + a] = f(&x, c, a);
                }
            }
        }
        Ok(out)
    }

    /// Form with the same value `values[c][a]` at every point.
    pub fn constant(
        grid: &Grid,
        degree: usize,
        algebra: &Arc<LieAlgebra>,
        values: &[Vec<f64>],
    ) -> Result<Self> {
        let out = Self::zeros(grid, degree, algebra)?;
        if values.len() != out.num_components() || values.iter().any(|v| v.len() != algebra.dim()) {
            return Err(Error::Argument("constant form value has wrong shape".into()));
        }
        Self::from_fn(grid, degree, algebra, |_, c, a| values[c][a])
    }

    /// Wraps raw point-major data.
    pub fn from_data(
        grid: &Grid,
        degree: usize,
        algebra: &Arc<LieAlgebra>,
        data: Vec<f64>,
    ) -> Result<Self> {
        let mut out = Self::zeros(grid, degree, algebra)?;
        if data.len() != out.data.len() {
            return Err(Error::Argument(format!(
                "expected {} values, got {}",
                out.data.len(),
                data.len()
            )));
        }
        out.data = data;
        Ok(out)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn algebra(&self) -> &Arc<LieAlgebra> {
        &self.algebra
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `C(n, k)`.
    pub fn num_components(&self) -> usize {
        binomial(self.grid.dim(), self.degree)
    }

    /// Index of the component `dx^{axes}`, axes strictly increasing.
    pub fn component_index(&self, axes: &[usize]) -> Option<usize> {
        multi_indices(self.grid.dim(), self.degree)
            .iter()
            .position(|v| v == axes)
    }

    /// Algebra element of component `c` at point `p`.
    pub fn value(&self, p: usize, c: usize) -> &[f64] {
        let d = self.algebra.dim();
        let base = (p * self.num_components() + c) * d;
        &self.data[base..base + d]
    }

    fn check_compatible(&self, other: &Form) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Argument("forms live on different grids".into()));
        }
        if self.algebra.label() != other.algebra.label() {
            return Err(Error::Argument(format!(
                "algebra mismatch: {} vs {}",
                self.algebra.label(),
                other.algebra.label()
            )));
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Form) -> Result<()> {
        self.check_compatible(other)?;
        if self.degree != other.degree {
            return Err(Error::Argument(format!(
                "degree mismatch: {} vs {}",
                self.degree, other.degree
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Form) -> Result<Form> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Form) -> Result<Form> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scaled(&self, s: f64) -> Form {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Form, b: f64) -> Result<Form> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (o, y) in out.data.iter_mut().zip(&other.data) {
            *o = a * *o + b * y;
        }
        Ok(out)
    }

    /// `self += s·other`.
    pub fn axpy(&mut self, s: f64, other: &Form) -> Result<()> {
        self.check_same_shape(other)?;
        for (o, y) in self.data.iter_mut().zip(&other.data) {
            *o += s * y;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Exterior derivative with forward differences.
    pub fn d(&self) -> Result<Form> {
        let n = self.grid.dim();
        if self.degree >= n {
            return Err(Error::Degree(format!(
                "d of a {}-form on an {n}-dimensional base",
                self.degree
            )));
        }
        let src = multi_indices(n, self.degree);
        let dst = multi_indices(n, self.degree + 1);
        // (dst component, axis, src component, sign)
        let mut table = Vec::new();
        for (jc, big) in dst.iter().enumerate() {
            for (pos, &axis) in big.iter().enumerate() {
                let small: Vec<usize> = big.iter().copied().filter(|&x| x != axis).collect();
                let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                table.push((jc, axis, index_of(&src, &small), sign));
            }
        }
        let mut out = Form::zeros(&self.grid, self.degree + 1, &self.algebra)?;
        let (ns, nd, d) = (src.len(), dst.len(), self.algebra.dim());
        let inv_h: Vec<f64> = (0..n).map(|a| 1.0 / self.grid.spacing(a)).collect();
        for p in 0..self.grid.len() {
            for &(jc, axis, ic, sign) in &table {
                let q = self.grid.forward(p, axis);
                let s = sign * inv_h[axis];
                for a in 0..d {
                    let diff = self.data[(q * ns + ic) * d + a] - self.data[(p * ns + ic) * d + a];
                    out.data[(p * nd + jc) * d + a] += s * diff;
                }
            }
        }
        Ok(out)
    }

    /// Codifferential: the exact adjoint of [`Form::d`] (backward differences).
    pub fn codiff(&self) -> Result<Form> {
        let n = self.grid.dim();
        if self.degree == 0 {
            return Err(Error::Degree("codifferential of a 0-form".into()));
        }
        let src = multi_indices(n, self.degree);
        let dst = multi_indices(n, self.degree - 1);
        let mut table = Vec::new();
        for (jc, big) in src.iter().enumerate() {
            for (pos, &axis) in big.iter().enumerate() {
                let small: Vec<usize> = big.iter().copied().filter(|&x| x != axis).collect();
                let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                table.push((index_of(&dst, &small), axis, jc, sign));
            }
        }
        let mut out = Form::zeros(&self.grid, self.degree - 1, &self.algebra)?;
        let (ns, nd, d) = (src.len(), dst.len(), self.algebra.dim());
        let inv_h: Vec<f64> = (0..n).map(|a| 1.0 / self.grid.spacing(a)).collect();
        for p in 0..self.grid.len() {
            for &(ic, axis, jc, sign) in &table {
                let q = self.grid.backward(p, axis);
                let s = -sign * inv_h[axis];
                for a in 0..d {
                    let diff = self.data[(p * ns + jc) * d + a] - self.data[(q * ns + jc) * d + a];
                    out.data[(p * nd + ic) * d + a] += s * diff;
                }
            }
        }
        Ok(out)
    }

    /// Hodge star for the flat metric: `*dx^I = sign(I, I^c) dx^{I^c}`.
    pub fn star(&self) -> Form {
        let n = self.grid.dim();
        let src = multi_indices(n, self.degree);
        let dst = multi_indices(n, n - self.degree);
        let map: Vec<(usize, f64)> = src
            .iter()
            .map(|i| {
                let comp: Vec<usize> = (0..n).filter(|x| !i.contains(x)).collect();
                (index_of(&dst, &comp), shuffle_sign(i, &comp))
            })
            .collect();
        let mut out = Form::zeros(&self.grid, n - self.degree, &self.algebra).expect("degree <= n");
        let (nc, d) = (src.len(), self.algebra.dim());
        for p in 0..self.grid.len() {
            for (ic, &(jc, sign)) in map.iter().enumerate() {
                for a in 0..d {
                    out.data[(p * nc + jc) * d + a] = sign * self.data[(p * nc + ic) * d + a];
                }
            }
        }
        out
    }

    /// Bracket-wedge `[α∧β]` via the shuffle sum, pointwise.
    pub fn wedge_bracket(&self, other: &Form) -> Result<Form> {
        self.check_compatible(other)?;
        let n = self.grid.dim();
        let (p, q) = (self.degree, other.degree);
        if p + q > n {
            return Err(Error::Argument(format!(
                "wedge of degrees {p} and {q} exceeds base dimension {n}"
            )));
        }
        let table = wedge_table(n, p, q);
        let mut out = Form::zeros(&self.grid, p + q, &self.algebra)?;
        if self.algebra.is_abelian() {
            return Ok(out);
        }
        let (na, nb, nk, d) = (
            binomial(n, p),
            binomial(n, q),
            binomial(n, p + q),
            self.algebra.dim(),
        );
        for pt in 0..self.grid.len() {
            for &(kc, ic, jc, sign) in &table {
                let x = &self.data[(pt * na + ic) * d..(pt * na + ic + 1) * d];
                let y = &other.data[(pt * nb + jc) * d..(pt * nb + jc + 1) * d];
                let o = &mut out.data[(pt * nk + kc) * d..(pt * nk + kc + 1) * d];
                self.algebra.bracket_acc(x, y, sign, o);
            }
        }
        Ok(out)
    }

    /// Discrete `L²` pairing `Σ ⟨α, φ⟩ Π h`.
    pub fn pairing(&self, other: &Form) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(dot(&self.data, &other.data) * self.grid.cell_volume())
    }

    /// Pointwise magnitude `|α|(x)`.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        let stride = self.num_components() * self.algebra.dim();
        if stride == 0 {
            return vec![0.0; self.grid.len()];
        }
        self.data
            .chunks(stride)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// Discrete `L^p` norm of `|α|`; `p = f64::INFINITY` gives the max.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::Argument(format!("L^p norm needs p >= 1, got {p}")));
        }
        let mags = self.pointwise_norm();
        if p.is_infinite() {
            return Ok(mags.iter().fold(0.0, |m, &v| m.max(v)));
        }
        let vol = self.grid.cell_volume();
        let sum: f64 = mags.iter().map(|m| m.powf(p)).sum();
        Ok((sum * vol).powf(1.0 / p))
    }

    pub fn l2_norm(&self) -> f64 {
        (dot(&self.data, &self.data) * self.grid.cell_volume()).sqrt()
    }

    /// Componentwise mean over the torus (the harmonic part on a periodic grid).
    pub fn mean(&self) -> Form {
        let stride = self.num_components() * self.algebra.dim();
        let mut avg = vec![0.0; stride];
        for chunk in self.data.chunks(stride.max(1)) {
            for (a, v) in avg.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        let inv = 1.0 / self.grid.len() as f64;
        avg.iter_mut().for_each(|a| *a *= inv);
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(stride.max(1)) {
            chunk.copy_from_slice(&avg);
        }
        out
    }

    /// Forward-difference `W^{1,2}` norm: `(‖α‖² + Σ_j ‖D_j α‖²)^{1/2}`.
    pub fn w12_norm(&self) -> f64 {
        let n = self.grid.dim();
        let stride = self.num_components() * self.algebra.dim();
        let mut grad = 0.0;
        for axis in 0..n {
            let inv_h = 1.0 / self.grid.spacing(axis);
            for p in 0..self.grid.len() {
                let q = self.grid.forward(p, axis);
                for s in 0..stride {
                    let v = (self.data[q * stride + s] - self.data[p * stride + s]) * inv_h;
                    grad += v * v;
                }
            }
        }
        let l2 = self.l2_norm();
        (l2 * l2 + grad * self.grid.cell_volume()).sqrt()
    }

    /// `‖d[α∧β] − [dα∧β] − (−1)^p [α∧dβ]‖_{L²}`.
    pub fn leibniz_residual(&self, other: &Form) -> Result<f64> {
        let sign = if self.degree.is_multiple_of(2) { 1.0 } else { -1.0 };
        let lhs = self.wedge_bracket(other)?.d()?;
        let t1 = self.d()?.wedge_bracket(other)?;
        let t2 = self.wedge_bracket(&other.d()?)?;
        let r = lhs.lin_comb(1.0, &t1, -1.0)?.lin_comb(1.0, &t2, -sign)?;
        Ok(r.l2_norm())
    }

    /// Writes the binary snapshot layout: little-endian `u64` header
    /// `n, sizes[0..n], k, d`, then point-major `f64` components.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec![self.grid.dim() as u64];
        header.extend(self.grid.sizes().iter().map(|&s| s as u64));
        header.push(self.degree as u64);
        header.push(self.algebra.dim() as u64);
        for h in header {
            w.write_all(&h.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a binary snapshot on a unit-period grid.
    pub fn read_binary<R: Read>(mut r: R, algebra: &Arc<LieAlgebra>) -> Result<Form> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)
                .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
            Ok(u64::from_le_bytes(word))
        };
        let n = next(&mut r)? as usize;
        if !(1..=4).contains(&n) {
            return Err(Error::Format(format!("bad base dimension {n}")));
        }
        let sizes: Vec<usize> = (0..n).map(|_| next(&mut r).map(|v| v as usize)).collect::<Result<_>>()?;
        let k = next(&mut r)? as usize;
        let d = next(&mut r)? as usize;
        if d != algebra.dim() {
            return Err(Error::Format(format!(
                "snapshot has algebra dimension {d}, expected {}",
                algebra.dim()
            )));
        }
        let grid = Grid::new(&sizes)?;
        let mut out = Form::zeros(&grid, k, algebra)?;
        let mut buf = vec![0u8; out.data.len() * 8];
        r.read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
        for (v, b) in out.data.iter_mut().zip(buf.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
        }
        Ok(out)
    }

    /// CSV dump: grid indices, then one column per component and algebra index.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.grid.dim();
        let comps = multi_indices(n, self.degree);
        let d = self.algebra.dim();
        let mut cols: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        for c in &comps {
            let name: String = if c.is_empty() {
                "f".into()
            } else {
                format!("dx{}", c.iter().map(|i| (i + 1).to_string()).collect::<String>())
            };
            for a in 0..d {
                cols.push(format!("{name}:{a}"));
            }
        }
        writeln!(w, "{}", cols.join(","))?;
        let stride = comps.len() * d;
        for p in 0..self.grid.len() {
            let mut row: Vec<String> = (0..n).map(|i| self.grid.coord(p, i).to_string()).collect();
            row.extend(self.data[p * stride..(p + 1) * stride].iter().map(|v| format!("{v:e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn wedge_table(n: usize, p: usize, q: usize) -> Vec<(usize, usize, usize, f64)> {
    let left = multi_indices(n, p);
    let right = multi_indices(n, q);
    let out = multi_indices(n, p + q);
    let mut table = Vec::new();
    for (kc, k) in out.iter().enumerate() {
        for sub in multi_indices(k.len(), p) {
            let i: Vec<usize> = sub.iter().map(|&s| k[s]).collect();
            let j: Vec<usize> = k.iter().copied().filter(|x| !i.contains(x)).collect();
            table.push((kc, index_of(&left, &i), index_of(&right, &j), shuffle_sign(&i, &j)));
        }
    }
    table
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Band-limited test form: a finite sum of Fourier modes with `|k_i| ≤ 2`,
/// evaluable on any grid of the same base dimension.
#[derive(Clone, Debug)]
pub struct TestForm {
    id: usize,
    dim: usize,
    degree: usize,
    /// `(component, algebra index, wavevector, cos coefficient, sin coefficient)`
    modes: Vec<(usize, usize, Vec<i32>, f64, f64)>,
}

impl TestForm {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn eval(&self, x: &[f64], comp: usize, a: usize, periods: &[f64]) -> f64 {
        self.modes
            .iter()
            .filter(|m| m.0 == comp && m.1 == a)
            .map(|(_, _, k, c, s)| {
                let phase: f64 = k
                    .iter()
                    .zip(x)
                    .zip(periods)
                    .map(|((&ki, &xi), &l)| 2.0 * PI * ki as f64 * xi / l)
                    .sum();
                c * phase.cos() + s * phase.sin()
            })
            .sum()
    }

    /// Samples the test form on `grid`.
    pub fn sample(&self, grid: &Grid, algebra: &Arc<LieAlgebra>) -> Result<Form> {
        if grid.dim() != self.dim {
            return Err(Error::Argument("test form sampled on wrong base dimension".into()));
        }
        let periods = grid.periods().to_vec();
        // Group modes per (component, algebra index) once.
        let nc = binomial(self.dim, self.degree);
        let d = algebra.dim();
        let mut groups: Vec<Vec<&(usize, usize, Vec<i32>, f64, f64)>> = vec![Vec::new(); nc * d];
        for m in &self.modes {
            if m.1 < d {
                groups[m.0 * d + m.1].push(m);
            }
        }
        Form::from_fn(grid, self.degree, algebra, |x, c, a| {
            groups[c * d + a]
                .iter()
                .map(|(_, _, k, cc, ss)| {
                    let phase: f64 = k
                        .iter()
                        .zip(x)
                        .zip(&periods)
                        .map(|((&ki, &xi), &l)| 2.0 * PI * ki as f64 * xi / l)
                        .sum();
                    cc * phase.cos() + ss * phase.sin()
                })
                .sum()
        })
    }
}

/// Deterministic bank of unit-`L²` band-limited test forms of one degree.
#[derive(Clone, Debug)]
pub struct TestFormBank {
    forms: Vec<TestForm>,
}

impl TestFormBank {
    /// `size` forms of `degree` on an `n`-dimensional base valued in an
    /// algebra of dimension `alg_dim`.
    pub fn new(n: usize, degree: usize, alg_dim: usize, size: usize, seed: u64) -> Result<Self> {
        if degree > n {
            return Err(Error::Degree(format!("bank degree {degree} > {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((n as u64) << 32) ^ ((degree as u64) << 40));
        let nc = binomial(n, degree);
        let reference = Grid::cube(n, 8)?;
        let scalar = Arc::new(LieAlgebra::new(crate::algebra::AlgebraLabel::Abelian(alg_dim))?);
        let mut forms = Vec::with_capacity(size);
        for id in 0..size {
            let mut modes = Vec::new();
            for c in 0..nc {
                for a in 0..alg_dim {
                    // Constant mode plus a handful of random low modes, decaying in |k|.
                    modes.push((c, a, vec![0; n], rng.gen_range(-1.0..1.0), 0.0));
                    for _ in 0..4 {
                        let k: Vec<i32> = (0..n).map(|_| rng.gen_range(-2..=2)).collect();
                        let w = 1.0 / (1.0 + k.iter().map(|v| (v * v) as f64).sum::<f64>());
                        modes.push((c, a, k, w * rng.gen_range(-1.0..1.0), w * rng.gen_range(-1.0..1.0)));
                    }
                }
            }
            let mut tf = TestForm {
                id,
                dim: n,
                degree,
                modes,
            };
            // Discrete orthogonality of |k| <= 2 modes is exact on 8 points per axis.
            let norm = tf.sample(&reference, &scalar)?.l2_norm();
            for m in &mut tf.modes {
                m.3 /= norm;
                m.4 /= norm;
            }
            forms.push(tf);
        }
        Ok(TestFormBank { forms })
    }

    pub fn forms(&self) -> &[TestForm] {
        &self.forms
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }
}
