//! Contrast source inversion on an investigation domain `T` embedded in a
//! known, possibly inhomogeneous background.
//!
//! Conventions: `K` maps a contrast source on `T` to the scattered field at
//! the receivers and `G` maps it to the scattered field on `T`, so that
//! `u = u_inc - G w` and `f = K w` for exact data `f`. The functional is
//!
//! ```text
//! F(w, m) = sum_s ||f_s - K w_s||^2 / sum_s ||f_s||^2
//!         + sum_s ||m u_inc_s - w_s - m G w_s||^2 / sum_s ||m u_inc_s||^2
//! ```

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{ArrayGeometry, MultistaticData};
use crate::error::{Error, Result};
use crate::forward::{green_background, off_cell_factor, point_source_field, LsKernel, PointEvaluator};
use crate::krylov::dot;
use crate::medium::{angular_frequency, ContrastMap, Grid, MediumMap, EPS0};
use crate::segment::RegionMask;

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

/// Copy of `background` with the exterior medium written into every cell of
/// `t`.
pub fn build_artificial_background(background: &MediumMap, t: &RegionMask) -> Result<MediumMap> {
    if !t.grid.same_as(&background.grid) {
        return Err(Error::DimensionMismatch("investigation domain is on a different grid".into()));
    }
    let mut out = background.clone();
    for i in t.indices() {
        out.set_material(i, background.exterior);
    }
    Ok(out)
}

/// Dense correction `k^2 beta us_b(x_i; z_b)` of the Green's function on
/// `T`, one column per block of source cells.
#[derive(Debug, Clone)]
struct Correction {
    block_of: Vec<usize>,
    columns: Vec<Vec<C>>,
}

/// Discretized operators of the inverse problem restricted to `T`.
pub struct CsiOperators {
    pub grid: Grid,
    /// Cells of `T` as indices into `grid`.
    pub cells: Vec<usize>,
    pub k0t: C,
    pub n0t: C,
    pub omega: f64,
    window: (usize, usize, usize, usize),
    box_kernel: LsKernel,
    local_in_box: Vec<usize>,
    correction: Option<Correction>,
    /// Row-major `R x |T|` scattered-field operator `K`.
    data_op: Vec<C>,
    n_receivers: usize,
    /// Incident fields of the artificial background on `T`, per source.
    pub incident: Vec<Vec<C>>,
    /// Scattered field of the artificial background at the receivers,
    /// source-major.
    pub background_response: Vec<C>,
}

fn window_of(t: &RegionMask) -> Result<(usize, usize, usize, usize)> {
    t.bounding_box().ok_or_else(|| Error::Validation(vec!["investigation domain is empty".into()]))
}

fn blocks(grid: &Grid, cells: &[usize], window: (usize, usize, usize, usize), size: usize) -> (Vec<usize>, Vec<usize>) {
    let (x0, y0, bnx, _) = window;
    let per_row = bnx.div_ceil(size);
    let mut ids: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut block_of = Vec::with_capacity(cells.len());
    for (i, &c) in cells.iter().enumerate() {
        let (x, y) = grid.coords(c);
        let key = ((y - y0) / size) * per_row + (x - x0) / size;
        let b = match ids.iter().position(|&k| k == key) {
            Some(b) => b,
            None => {
                ids.push(key);
                members.push(Vec::new());
                ids.len() - 1
            }
        };
        members[b].push(i);
        block_of.push(b);
    }
    // The representative of a block is its cell nearest to the member centroid.
    let reps = members
        .iter()
        .map(|m| {
            let n = m.len() as f64;
            let (sx, sy) = m.iter().fold((0.0, 0.0), |(sx, sy), &i| {
                let p = grid.center_of(cells[i]);
                (sx + p.x, sy + p.y)
            });
            let centroid = crate::medium::Point::new(sx / n, sy / n);
            *m.iter()
                .min_by(|&&a, &&b| {
                    let da = grid.center_of(cells[a]).distance(centroid);
                    let db = grid.center_of(cells[b]).distance(centroid);
                    da.total_cmp(&db)
                })
                .expect("nonempty block")
        })
        .collect();
    (block_of, reps)
}

/// Builds `G`, `K` and the incident fields for the artificial background.
/// The background must vanish on `T`; `block_size` groups `T` cells into
/// square blocks that share one background solve.
pub fn build_csi_operators(
    artificial: &MediumMap,
    t: &RegionMask,
    geometry: &ArrayGeometry,
    freq: f64,
    tol: f64,
    block_size: usize,
) -> Result<CsiOperators> {
    if !t.grid.same_as(&artificial.grid) {
        return Err(Error::DimensionMismatch("investigation domain is on a different grid".into()));
    }
    if block_size == 0 {
        return Err(Error::Domain("block size must be positive".into()));
    }
    let grid = artificial.grid;
    let omega = angular_frequency(freq);
    let n0t = artificial.exterior_index(omega)?;
    let k0t = artificial.wavenumber(omega)?;
    let mb = artificial.exterior_contrast(omega)?;
    let cells = t.indices();
    if cells.iter().any(|&c| mb.support[c]) {
        return Err(Error::Validation(vec!["background is not homogeneous on the investigation domain".into()]));
    }
    let window = window_of(t)?;
    let (x0, y0, bnx, bny) = window;
    let box_kernel = LsKernel::new(grid.window(x0, y0, bnx, bny)?, k0t)?;
    let local_in_box = cells
        .iter()
        .map(|&c| {
            let (x, y) = grid.coords(c);
            (y - y0) * bnx + (x - x0)
        })
        .collect();
    let kernel = LsKernel::new(grid, k0t)?;
    let k2 = kernel.k0t_sq();
    let beta = off_cell_factor(k0t, kernel.equivalent_radius())?;
    let homogeneous = mb.is_zero();
    let gather = |field: &[C]| -> Vec<C> { cells.iter().map(|&c| field[c]).collect() };

    let receivers = geometry.receivers();
    let sources = geometry.sources();
    let evaluator = PointEvaluator::new(&kernel, &receivers, &cells)?;
    let mut data_op = evaluator.weights().to_vec();
    let (incident, background_response, correction);
    if homogeneous {
        incident = sources
            .iter()
            .map(|&x| point_source_field(&kernel, x).map(|f| gather(&f.values)))
            .collect::<Result<Vec<_>>>()?;
        background_response = vec![ZERO; sources.len() * receivers.len()];
        correction = None;
    } else {
        let support: Vec<usize> = (0..grid.len()).filter(|&j| mb.support[j]).collect();
        let support_eval = PointEvaluator::new(&kernel, &receivers, &support)?;
        let per_source = sources
            .par_iter()
            .map(|&x| {
                let (g, _) = green_background(&mb, &kernel, x, tol)?;
                let w: Vec<C> = support.iter().map(|&j| mb.values[j] * g.values[j]).collect();
                Ok((gather(&g.values), support_eval.evaluate_local(&w)))
            })
            .collect::<Result<Vec<_>>>()?;
        let (inc, resp): (Vec<_>, Vec<_>) = per_source.into_iter().unzip();
        incident = inc;
        background_response = resp.concat();

        let receiver_fields = receivers
            .par_iter()
            .map(|&x| green_background(&mb, &kernel, x, tol).map(|(_, usb)| gather(&usb.values)))
            .collect::<Result<Vec<_>>>()?;
        let n = cells.len();
        for (r, field) in receiver_fields.iter().enumerate() {
            for (entry, v) in data_op[r * n..(r + 1) * n].iter_mut().zip(field) {
                *entry -= k2 * beta * v;
            }
        }

        let (block_of, reps) = blocks(&grid, &cells, window, block_size);
        let columns = reps
            .par_iter()
            .map(|&i| {
                let z = grid.center_of(cells[i]);
                green_background(&mb, &kernel, z, tol)
                    .map(|(_, usb)| cells.iter().map(|&c| k2 * beta * usb.values[c]).collect())
            })
            .collect::<Result<Vec<Vec<C>>>>()?;
        correction = Some(Correction { block_of, columns });
    }

    Ok(CsiOperators {
        grid,
        cells,
        k0t,
        n0t,
        omega,
        window,
        box_kernel,
        local_in_box,
        correction,
        data_op,
        n_receivers: receivers.len(),
        incident,
        background_response,
    })
}

impl CsiOperators {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn n_sources(&self) -> usize {
        self.incident.len()
    }

    pub fn n_receivers(&self) -> usize {
        self.n_receivers
    }

    pub fn has_correction(&self) -> bool {
        self.correction.is_some()
    }

    fn box_len(&self) -> usize {
        self.window.2 * self.window.3
    }

    /// Scattered field on `T` of the contrast source `w`.
    pub fn apply_domain(&self, w: &[C]) -> Vec<C> {
        let k2 = self.k0t * self.k0t;
        let mut boxed = vec![ZERO; self.box_len()];
        for (&l, &v) in self.local_in_box.iter().zip(w) {
            boxed[l] = v;
        }
        let mut conv = vec![ZERO; boxed.len()];
        self.box_kernel.convolve(&boxed, &mut conv);
        let mut out: Vec<C> = self.local_in_box.iter().map(|&l| k2 * conv[l]).collect();
        if let Some(corr) = &self.correction {
            let mut sums = vec![ZERO; corr.columns.len()];
            for (&b, &v) in corr.block_of.iter().zip(w) {
                sums[b] += v;
            }
            for (col, s) in corr.columns.iter().zip(&sums) {
                if *s != ZERO {
                    for (o, c) in out.iter_mut().zip(col) {
                        *o += c * s;
                    }
                }
            }
        }
        out
    }

    /// Adjoint of [`apply_domain`](Self::apply_domain).
    pub fn apply_domain_adjoint(&self, v: &[C]) -> Vec<C> {
        let k2 = (self.k0t * self.k0t).conj();
        let mut boxed = vec![ZERO; self.box_len()];
        for (&l, &x) in self.local_in_box.iter().zip(v) {
            boxed[l] = x;
        }
        let mut conv = vec![ZERO; boxed.len()];
        self.box_kernel.convolve_adjoint(&boxed, &mut conv);
        let mut out: Vec<C> = self.local_in_box.iter().map(|&l| k2 * conv[l]).collect();
        if let Some(corr) = &self.correction {
            let sums: Vec<C> = corr.columns.iter().map(|col| dot(col, v)).collect();
            for (o, &b) in out.iter_mut().zip(&corr.block_of) {
                *o += sums[b];
            }
        }
        out
    }

    /// Scattered field at the receivers of the contrast source `w`.
    pub fn apply_data(&self, w: &[C]) -> Vec<C> {
        let n = self.len();
        self.data_op.chunks_exact(n).map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn apply_data_adjoint(&self, v: &[C]) -> Vec<C> {
        let n = self.len();
        let mut out = vec![ZERO; n];
        for (row, vr) in self.data_op.chunks_exact(n).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * vr;
            }
        }
        out
    }

    /// Embeds values on `T` into a full-grid contrast map.
    pub fn to_contrast(&self, m: &[C]) -> Result<ContrastMap> {
        let mut values = vec![ZERO; self.grid.len()];
        for (&c, &v) in self.cells.iter().zip(m) {
            values[c] = v;
        }
        ContrastMap::from_values(self.grid, values)
    }
}

/// Scattered data referred to the artificial background, per source.
///
/// With a recorded background response the measured background is
/// subtracted and the modelled difference between the true and artificial
/// backgrounds is added back; otherwise the artificial background response
/// is subtracted from the raw data.
pub fn csi_data(
    data: &MultistaticData,
    background: &MediumMap,
    ops: &CsiOperators,
    freq: f64,
    tol: f64,
) -> Result<Vec<Vec<C>>> {
    let (s_count, r_count) = (data.n_sources(), data.n_receivers());
    if s_count != ops.n_sources() || r_count != ops.n_receivers() {
        return Err(Error::DimensionMismatch("data do not match the operator geometry".into()));
    }
    let flat: Vec<C> = match &data.u_s_b {
        Some(usb) => {
            let model = background_response(background, &data.geometry, freq, tol)?;
            (0..s_count * r_count).map(|i| data.u_s[i] - usb[i] + model[i] - ops.background_response[i]).collect()
        }
        None => data.u_s.iter().zip(&ops.background_response).map(|(a, b)| a - b).collect(),
    };
    Ok(flat.chunks_exact(r_count).map(|c| c.to_vec()).collect())
}

/// Scattered field of `background` at the receivers, source-major.
fn background_response(background: &MediumMap, geometry: &ArrayGeometry, freq: f64, tol: f64) -> Result<Vec<C>> {
    let omega = angular_frequency(freq);
    let mb = background.exterior_contrast(omega)?;
    let receivers = geometry.receivers();
    if mb.is_zero() {
        return Ok(vec![ZERO; geometry.n_sources * receivers.len()]);
    }
    let kernel = LsKernel::new(background.grid, background.wavenumber(omega)?)?;
    let support: Vec<usize> = (0..mb.grid.len()).filter(|&j| mb.support[j]).collect();
    let eval = PointEvaluator::new(&kernel, &receivers, &support)?;
    let rows = geometry
        .sources()
        .par_iter()
        .map(|&x| {
            let (g, _) = green_background(&mb, &kernel, x, tol)?;
            let w: Vec<C> = support.iter().map(|&j| mb.values[j] * g.values[j]).collect();
            Ok(eval.evaluate_local(&w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.concat())
}

/// How the state-term denominator `sum_s ||m u_inc_s||^2` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateNormalization {
    /// Uses the contrast the functional is evaluated at.
    #[default]
    Current,
    /// Uses the initial contrast throughout the run.
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsiConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Project the contrast onto `eps_r >= 1`, `sigma >= 0` after each
    /// contrast update.
    pub positivity: bool,
    pub block_size: usize,
    pub solver_tol: f64,
    pub state_normalization: StateNormalization,
}

impl Default for CsiConfig {
    fn default() -> Self {
        Self {
            max_iter: 1024,
            tol: 1e-6,
            positivity: false,
            block_size: 1,
            solver_tol: 1e-8,
            state_normalization: StateNormalization::Current,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub total: f64,
    pub data_term: f64,
    pub state_term: f64,
    /// Set when the contrast vanishes and the state term is normalized by
    /// the incident field instead.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
struct SourceState {
    w: Vec<C>,
    /// `K w`
    kw: Vec<C>,
    /// `G w`
    gw: Vec<C>,
    grad: Option<Vec<C>>,
    dir: Vec<C>,
}

#[derive(Debug, Clone)]
pub struct CsiState {
    sources: Vec<SourceState>,
    pub m: Vec<C>,
    pub data_weight: f64,
    /// Fixed state-term denominator for [`StateNormalization::Initial`].
    initial_state_norm: Option<f64>,
    pub history: Vec<FunctionalValue>,
}

impl CsiState {
    pub fn contrast_sources(&self) -> Vec<&[C]> {
        self.sources.iter().map(|s| s.w.as_slice()).collect()
    }

    pub fn current(&self) -> FunctionalValue {
        *self.history.last().expect("history starts at initialization")
    }
}

fn norm_sqr(v: &[C]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

fn data_weight(data: &[Vec<C>]) -> f64 {
    let total: f64 = data.iter().map(|f| norm_sqr(f)).sum();
    if total > 0.0 {
        1.0 / total
    } else {
        1.0
    }
}

fn state_norm(ops: &CsiOperators, m: &[C]) -> (f64, bool) {
    let weighted: f64 =
        ops.incident.iter().map(|ui| ui.iter().zip(m).map(|(u, mi)| (mi * u).norm_sqr()).sum::<f64>()).sum();
    if weighted > 0.0 {
        (weighted, false)
    } else {
        (ops.incident.iter().map(|u| norm_sqr(u)).sum::<f64>().max(f64::MIN_POSITIVE), true)
    }
}

fn state_residual(m: &[C], ui: &[C], gw: &[C], w: &[C]) -> Vec<C> {
    m.iter().zip(ui).zip(gw).zip(w).map(|(((mi, u), g), wi)| mi * (u - g) - wi).collect()
}

fn data_residual(f: &[C], kw: &[C]) -> Vec<C> {
    f.iter().zip(kw).map(|(a, b)| a - b).collect()
}

/// `F(w, m)` evaluated from scratch.
pub fn functional_value(ops: &CsiOperators, data: &[Vec<C>], w: &[Vec<C>], m: &[C]) -> FunctionalValue {
    let (denominator, degenerate) = state_norm(ops, m);
    functional_with(ops, data, w, m, denominator, degenerate)
}

fn functional_with(
    ops: &CsiOperators,
    data: &[Vec<C>],
    w: &[Vec<C>],
    m: &[C],
    denominator: f64,
    degenerate: bool,
) -> FunctionalValue {
    let eta_s = data_weight(data);
    let (mut d, mut s) = (0.0, 0.0);
    for ((f, ws), ui) in data.iter().zip(w).zip(&ops.incident) {
        d += norm_sqr(&data_residual(f, &ops.apply_data(ws)));
        s += norm_sqr(&state_residual(m, ui, &ops.apply_domain(ws), ws));
    }
    let data_term = eta_s * d;
    let state_term = s / denominator;
    FunctionalValue { total: data_term + state_term, data_term, state_term, degenerate }
}

/// Gradient of `F` with respect to `conj(w_s)` for every source, so that
/// `dF(w + t d)/dt = 2 Re sum_s <g_s, d_s>`.
pub fn functional_gradient(ops: &CsiOperators, data: &[Vec<C>], w: &[Vec<C>], m: &[C]) -> Vec<Vec<C>> {
    let eta_s = data_weight(data);
    let eta_d = 1.0 / state_norm(ops, m).0;
    data.iter()
        .zip(w)
        .zip(&ops.incident)
        .map(|((f, ws), ui)| {
            let rho = data_residual(f, &ops.apply_data(ws));
            let r = state_residual(m, ui, &ops.apply_domain(ws), ws);
            gradient(ops, m, &rho, &r, eta_s, eta_d)
        })
        .collect()
}

fn gradient(ops: &CsiOperators, m: &[C], rho: &[C], r: &[C], eta_s: f64, eta_d: f64) -> Vec<C> {
    let k_adj = ops.apply_data_adjoint(rho);
    let mr: Vec<C> = m.iter().zip(r).map(|(mi, ri)| mi.conj() * ri).collect();
    let g_adj = ops.apply_domain_adjoint(&mr);
    k_adj.iter().zip(r).zip(&g_adj).map(|((k, ri), g)| -eta_s * k - eta_d * (ri + g)).collect()
}

fn update_contrast(ops: &CsiOperators, sources: &[SourceState], positivity: bool) -> Vec<C> {
    let n = ops.len();
    let mut num = vec![ZERO; n];
    let mut den = vec![0.0; n];
    for (s, ui) in sources.iter().zip(&ops.incident) {
        for i in 0..n {
            let u = ui[i] - s.gw[i];
            num[i] += s.w[i] * u.conj();
            den[i] += u.norm_sqr();
        }
    }
    num.iter()
        .zip(&den)
        .map(|(&a, &b)| {
            let m = if b > 0.0 { a / b } else { ZERO };
            if positivity {
                project(m, ops.n0t)
            } else {
                m
            }
        })
        .collect()
}

fn project(m: C, n0t: C) -> C {
    let n = n0t * (1.0 - m);
    let clipped = C::new(n.re.max(1.0), n.im.max(0.0));
    1.0 - clipped / n0t
}

impl CsiState {
    fn denominator(&self, ops: &CsiOperators, m: &[C]) -> (f64, bool) {
        match self.initial_state_norm {
            Some(v) => (v, false),
            None => state_norm(ops, m),
        }
    }

    fn evaluate(&self, ops: &CsiOperators, data: &[Vec<C>], m: &[C]) -> FunctionalValue {
        let (denominator, degenerate) = self.denominator(ops, m);
        let (mut d, mut s) = (0.0, 0.0);
        for ((src, f), ui) in self.sources.iter().zip(data).zip(&ops.incident) {
            d += norm_sqr(&data_residual(f, &src.kw));
            s += norm_sqr(&state_residual(m, ui, &src.gw, &src.w));
        }
        let data_term = self.data_weight * d;
        let state_term = s / denominator;
        FunctionalValue { total: data_term + state_term, data_term, state_term, degenerate }
    }
}

/// Backpropagated contrast sources and the least-squares contrast they
/// imply.
pub fn backpropagation_init(
    ops: &CsiOperators,
    data: &[Vec<C>],
    normalization: StateNormalization,
    positivity: bool,
) -> Result<CsiState> {
    if data.len() != ops.n_sources() || data.iter().any(|f| f.len() != ops.n_receivers()) {
        return Err(Error::DimensionMismatch("data do not match the operator geometry".into()));
    }
    let sources: Vec<SourceState> = data
        .par_iter()
        .map(|f| {
            let back = ops.apply_data_adjoint(f);
            let forward = ops.apply_data(&back);
            let den = norm_sqr(&forward);
            let scale = if den > 0.0 { norm_sqr(&back) / den } else { 0.0 };
            let w: Vec<C> = back.iter().map(|v| v * scale).collect();
            SourceState { kw: ops.apply_data(&w), gw: ops.apply_domain(&w), w, grad: None, dir: vec![ZERO; ops.len()] }
        })
        .collect();
    let m = update_contrast(ops, &sources, positivity);
    let mut state =
        CsiState { sources, m, data_weight: data_weight(data), initial_state_norm: None, history: Vec::new() };
    if normalization == StateNormalization::Initial {
        state.initial_state_norm = Some(state_norm(ops, &state.m).0);
    }
    let value = state.evaluate(ops, data, &state.m);
    state.history.push(value);
    Ok(state)
}

/// One error-reducing sweep: conjugate-gradient update of every contrast
/// source followed by the contrast update, each kept only if it does not
/// increase the functional.
pub fn csi_step(state: &mut CsiState, ops: &CsiOperators, data: &[Vec<C>], positivity: bool) {
    let before = state.current();
    let eta_s = state.data_weight;
    let (denominator, _) = state.denominator(ops, &state.m);
    let eta_d = 1.0 / denominator;
    let m = state.m.clone();

    state.sources.par_iter_mut().zip(data).zip(&ops.incident).for_each(|((src, f), ui)| {
        let rho = data_residual(f, &src.kw);
        let r = state_residual(&m, ui, &src.gw, &src.w);
        let old = eta_s * norm_sqr(&rho) + eta_d * norm_sqr(&r);
        let g = gradient(ops, &m, &rho, &r, eta_s, eta_d);
        let gamma = match &src.grad {
            Some(prev) => {
                let pn = norm_sqr(prev);
                if pn > 0.0 {
                    g.iter().zip(prev).map(|(a, b)| (a.conj() * (a - b)).re).sum::<f64>() / pn
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
        let dir: Vec<C> = g.iter().zip(&src.dir).map(|(gi, d)| -gi + gamma * d).collect();
        let kv = ops.apply_data(&dir);
        let gv = ops.apply_domain(&dir);
        let av: Vec<C> = dir.iter().zip(&gv).zip(&m).map(|((v, g), mi)| v + mi * g).collect();
        let den = eta_s * norm_sqr(&kv) + eta_d * norm_sqr(&av);
        let alpha = if den > 0.0 { (eta_s * dot(&kv, &rho) + eta_d * dot(&av, &r)) / den } else { ZERO };
        src.grad = Some(g);
        src.dir = dir;
        if alpha == ZERO {
            return;
        }
        let w: Vec<C> = src.w.iter().zip(&src.dir).map(|(a, b)| a + alpha * b).collect();
        let kw: Vec<C> = src.kw.iter().zip(&kv).map(|(a, b)| a + alpha * b).collect();
        let gw: Vec<C> = src.gw.iter().zip(&gv).map(|(a, b)| a + alpha * b).collect();
        let new = eta_s * norm_sqr(&data_residual(f, &kw)) + eta_d * norm_sqr(&state_residual(&m, ui, &gw, &w));
        if new <= old {
            src.w = w;
            src.kw = kw;
            src.gw = gw;
        }
    });

    let mut after_w = state.evaluate(ops, data, &m);
    if after_w.total > before.total {
        // Source-wise decreases can only fail to add up through rounding.
        after_w = before;
    }
    let candidate = update_contrast(ops, &state.sources, positivity);
    let after_m = state.evaluate(ops, data, &candidate);
    let value = if after_m.total <= after_w.total {
        state.m = candidate;
        after_m
    } else {
        after_w
    };
    state.history.push(value);
}

#[derive(Debug, Clone)]
pub struct CsiResult {
    /// Reconstructed contrast relative to the artificial background, zero
    /// outside `T`.
    pub contrast: ContrastMap,
    pub history: Vec<FunctionalValue>,
    pub iterations: usize,
}

/// Full inversion: artificial background, operators, backpropagation and
/// error-reducing sweeps until `max_iter` or stagnation over ten steps.
pub fn run_csi(
    data: &MultistaticData,
    background: &MediumMap,
    t: &RegionMask,
    freq: f64,
    config: &CsiConfig,
) -> Result<CsiResult> {
    let artificial = build_artificial_background(background, t)?;
    let ops = build_csi_operators(&artificial, t, &data.geometry, freq, config.solver_tol, config.block_size)?;
    let f = csi_data(data, background, &ops, freq, config.solver_tol)?;
    run_with_operators(&ops, &f, config)
}

/// Iterates on prebuilt operators and data.
pub fn run_with_operators(ops: &CsiOperators, data: &[Vec<C>], config: &CsiConfig) -> Result<CsiResult> {
    let mut state = backpropagation_init(ops, data, config.state_normalization, config.positivity)?;
    let mut iterations = 0;
    while iterations < config.max_iter {
        csi_step(&mut state, ops, data, config.positivity);
        iterations += 1;
        let h = &state.history;
        let now = h[h.len() - 1].total;
        if now == 0.0 {
            break;
        }
        if h.len() > 10 && (h[h.len() - 11].total - now) < config.tol * now {
            break;
        }
        if iterations % 64 == 0 {
            log::debug!("csi iteration {iterations}: functional {now:.6e}");
        }
    }
    Ok(CsiResult { contrast: ops.to_contrast(&state.m)?, history: state.history, iterations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalMaps {
    pub eps_r: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Cells where `eps_r < 1` or `sigma < 0` had to be clipped.
    pub clipped: usize,
}

/// `n = n0 (1 - m)`, `eps_r = Re n`, `sigma = Im n * omega * eps0`.
pub fn contrast_to_physical(m: &ContrastMap, n0t: C, omega: f64) -> Result<PhysicalMaps> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("angular frequency must be positive, got {omega}")));
    }
    let mut clipped = 0;
    let (mut eps_r, mut sigma) = (Vec::with_capacity(m.values.len()), Vec::with_capacity(m.values.len()));
    for v in &m.values {
        let n = n0t * (1.0 - v);
        let (mut e, mut s) = (n.re, n.im * omega * EPS0);
        if e < 1.0 || s < 0.0 {
            clipped += 1;
            e = e.max(1.0);
            s = s.max(0.0);
        }
        eps_r.push(e);
        sigma.push(s);
    }
    if clipped > 0 {
        log::warn!("{clipped} reconstructed cells clipped to eps_r >= 1, sigma >= 0");
    }
    Ok(PhysicalMaps { eps_r, sigma, clipped })
}

/// Mean of `values` over the cells of `mask`.
pub fn masked_mean(values: &[f64], mask: &[bool]) -> f64 {
    let (s, n) = values.iter().zip(mask).filter(|(_, &b)| b).fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// `||a - b|| / ||b||` over the cells of `mask`.
pub fn masked_relative_error(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((x, y), &k) in a.iter().zip(b).zip(mask) {
        if k {
            num += (x - y).powi(2);
            den += y * y;
        }
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::simulate_dataset;
    use crate::forward::solve_total_field;
    use crate::krylov::norm;
    use crate::medium::{contrast, make_phantom, ComplexGridField, Material, PhantomSpec, Point, Shape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const F: f64 = crate::medium::C0;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C> {
        (0..n).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    fn grid(n: usize, h: f64) -> Grid {
        Grid::centered(Point::new(0.0, 0.0), h, n).unwrap()
    }

    fn ring(n: usize, radius: f64) -> ArrayGeometry {
        ArrayGeometry::standard(Point::new(0.0, 0.0), radius, n)
    }

    fn square_mask(g: Grid, x0: usize, y0: usize, size: usize) -> RegionMask {
        let inside = (0..g.len())
            .map(|i| {
                let (x, y) = g.coords(i);
                x >= x0 && x < x0 + size && y >= y0 && y < y0 + size
            })
            .collect();
        RegionMask::new(g, inside).unwrap()
    }

    fn full_mask(g: Grid) -> RegionMask {
        RegionMask::new(g, vec![true; g.len()]).unwrap()
    }

    /// Ring of permittivity 2 around the middle of a 14x14 grid.
    fn barrier(g: Grid) -> MediumMap {
        let spec = PhantomSpec::homogeneous(Material::VACUUM).with_shape(Shape::Annulus {
            center: [0.0, 0.0],
            inner_radius: 0.22,
            outer_radius: 0.32,
            material: Material::new(2.0, 0.0),
        });
        make_phantom(&spec, &g).unwrap()
    }

    fn inhomogeneous_ops(block: usize) -> (MediumMap, RegionMask, CsiOperators) {
        let g = grid(14, 0.05);
        let bg = barrier(g);
        let t = square_mask(g, 4, 4, 6);
        let art = build_artificial_background(&bg, &t).unwrap();
        let ops = build_csi_operators(&art, &t, &ring(6, 1.0), F, 1e-10, block).unwrap();
        (bg, t, ops)
    }

    #[test]
    fn artificial_background_edge_cases() {
        let g = grid(14, 0.05);
        let bg = barrier(g);
        let empty = RegionMask::empty(g);
        assert_eq!(build_artificial_background(&bg, &empty).unwrap(), bg);
        let all = build_artificial_background(&bg, &full_mask(g)).unwrap();
        assert_eq!(all, MediumMap::uniform(g, Material::VACUUM));
        let inner = square_mask(g, 5, 5, 4);
        let art = build_artificial_background(&bg, &inner).unwrap();
        for i in 0..g.len() {
            let expect = if inner.inside[i] { Material::VACUUM } else { bg.material(i) };
            assert_eq!(art.material(i), expect);
        }
    }

    #[test]
    fn homogeneous_operators_reduce_to_free_space_kernel() {
        let g = grid(10, 0.05);
        let t = square_mask(g, 2, 3, 5);
        let ops = build_csi_operators(&MediumMap::uniform(g, Material::VACUUM), &t, &ring(5, 1.0), F, 1e-8, 1).unwrap();
        assert!(!ops.has_correction());
        let kernel = LsKernel::new(g, ops.k0t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random_vec(&mut rng, ops.len());
        let mut full = vec![ZERO; g.len()];
        for (&c, &v) in ops.cells.iter().zip(&w) {
            full[c] = v;
        }
        let mut conv = vec![ZERO; g.len()];
        kernel.convolve(&full, &mut conv);
        let got = ops.apply_domain(&w);
        for (&c, v) in ops.cells.iter().zip(&got) {
            assert!((v - kernel.k0t_sq() * conv[c]).norm() < 1e-12 * v.norm().max(1e-3));
        }
        let f = crate::forward::scattered_at_points(
            &ComplexGridField::new(g, full).unwrap(),
            &kernel,
            &ring(5, 1.0).receivers(),
        )
        .unwrap();
        for (a, b) in ops.apply_data(&w).iter().zip(&f) {
            assert!((a - b).norm() < 1e-12 * b.norm());
        }
    }

    fn dense_domain(ops: &CsiOperators) -> Vec<Vec<C>> {
        let n = ops.len();
        (0..n)
            .map(|j| {
                let mut e = vec![ZERO; n];
                e[j] = C::new(1.0, 0.0);
                ops.apply_domain(&e)
            })
            .collect()
    }

    #[test]
    fn domain_operator_matches_dense_assembly() {
        let g = grid(16, 0.05);
        let bg = barrier(g);
        let t = square_mask(g, 4, 4, 8);
        let art = build_artificial_background(&bg, &t).unwrap();
        let ops = build_csi_operators(&art, &t, &ring(4, 1.0), F, 1e-10, 1).unwrap();
        let kernel = LsKernel::new(g, ops.k0t).unwrap();
        let k2 = kernel.k0t_sq();
        let beta = off_cell_factor(ops.k0t, kernel.equivalent_radius()).unwrap();
        let mb = art.exterior_contrast(ops.omega).unwrap();
        let n = ops.len();
        let mut dense = vec![ZERO; n * n];
        for (j, &cj) in ops.cells.iter().enumerate() {
            let (_, usb) = green_background(&mb, &kernel, g.center_of(cj), 1e-10).unwrap();
            let (xj, yj) = g.coords(cj);
            for (i, &ci) in ops.cells.iter().enumerate() {
                let (xi, yi) = g.coords(ci);
                let c = kernel.offset_value(xi as isize - xj as isize, yi as isize - yj as isize);
                dense[i * n + j] = k2 * c + k2 * beta * usb.values[ci];
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = random_vec(&mut rng, n);
        let fast = ops.apply_domain(&w);
        let reference: Vec<C> = (0..n).map(|i| (0..n).map(|j| dense[i * n + j] * w[j]).sum()).collect();
        let diff: Vec<C> = fast.iter().zip(&reference).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) < 1e-10 * norm(&reference));
    }

    #[test]
    fn adjoints_are_consistent() {
        let (_, _, ops) = inhomogeneous_ops(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let f = random_vec(&mut rng, ops.len());
            let g = random_vec(&mut rng, ops.len());
            let v = random_vec(&mut rng, ops.n_receivers());
            let lhs = dot(&ops.apply_domain(&f), &g);
            let rhs = dot(&f, &ops.apply_domain_adjoint(&g));
            assert!((lhs - rhs).norm() < 1e-10 * lhs.norm());
            let lhs = dot(&ops.apply_data(&f), &v);
            let rhs = dot(&f, &ops.apply_data_adjoint(&v));
            assert!((lhs - rhs).norm() < 1e-10 * lhs.norm());
        }
    }

    #[test]
    fn receiver_operator_matches_green_cache() {
        let (bg, t, ops) = inhomogeneous_ops(1);
        let art = build_artificial_background(&bg, &t).unwrap();
        let cache = crate::lsm::GreenCache::build(&art, &ring(6, 1.0), F, 1e-10).unwrap();
        let k2 = ops.k0t * ops.k0t;
        let beta = off_cell_factor(ops.k0t, t.grid.equivalent_radius()).unwrap();
        for j in [0, 7, 20, 35] {
            let mut e = vec![ZERO; ops.len()];
            e[j] = C::new(1.0, 0.0);
            let column = ops.apply_data(&e);
            let z = t.grid.center_of(ops.cells[j]);
            let g = crate::lsm::lsm_rhs(&cache, z).unwrap();
            for (a, b) in column.iter().zip(&g) {
                assert!((-a - k2 * beta * b).norm() < 1e-10 * a.norm());
            }
        }
    }

    /// Two-disk scene inside the barrier with data from the same grid.
    fn scene() -> (MediumMap, MediumMap, RegionMask, ArrayGeometry) {
        let g = grid(14, 0.05);
        let bg = barrier(g);
        let mut total = bg.clone();
        for i in 0..g.len() {
            let p = g.center_of(i);
            if (p.x - 0.07).hypot(p.y) < 0.1 {
                total.set_material(i, Material::new(1.5, 0.0));
            }
        }
        (total, bg, square_mask(g, 4, 4, 6), ring(8, 1.0))
    }

    fn scene_problem(positivity: bool) -> (CsiOperators, Vec<Vec<C>>, CsiState) {
        let (total, bg, t, geom) = scene();
        let data = simulate_dataset(&total, &bg, &geom, F, 1e-10).unwrap();
        let art = build_artificial_background(&bg, &t).unwrap();
        let ops = build_csi_operators(&art, &t, &geom, F, 1e-10, 1).unwrap();
        let f = csi_data(&data, &bg, &ops, F, 1e-10).unwrap();
        let state = backpropagation_init(&ops, &f, StateNormalization::Current, positivity).unwrap();
        (ops, f, state)
    }

    #[test]
    fn data_rule_matches_exact_contrast_source() {
        let (total, bg, t, geom) = scene();
        let data = simulate_dataset(&total, &bg, &geom, F, 1e-11).unwrap();
        let art = build_artificial_background(&bg, &t).unwrap();
        let ops = build_csi_operators(&art, &t, &geom, F, 1e-11, 1).unwrap();
        let f = csi_data(&data, &bg, &ops, F, 1e-11).unwrap();
        // Exact contrast sources from the full solve with the artificial background.
        let omega = ops.omega;
        let n = total.index_map(omega).unwrap();
        let nb = art.index_map(omega).unwrap();
        let m = contrast(t.grid, &n, &nb, ops.n0t).unwrap();
        let kernel = LsKernel::new(t.grid, ops.k0t).unwrap();
        let mt = total.exterior_contrast(omega).unwrap();
        for (s, &x) in geom.sources().iter().enumerate() {
            let ui = point_source_field(&kernel, x).unwrap();
            let (u, _) = solve_total_field(&ui, &mt, &kernel, 1e-11).unwrap();
            let w: Vec<C> = ops.cells.iter().map(|&c| m.values[c] * u.values[c]).collect();
            let model = ops.apply_data(&w);
            let diff: Vec<C> = model.iter().zip(&f[s]).map(|(a, b)| a - b).collect();
            assert!(norm(&diff) < 0.02 * norm(&f[s]), "source {s}: {}", norm(&diff) / norm(&f[s]));
        }
    }

    #[test]
    fn functional_edge_values() {
        let (ops, f, state) = scene_problem(false);
        let zero: Vec<Vec<C>> = vec![vec![ZERO; ops.len()]; ops.n_sources()];
        let at_zero = functional_value(&ops, &f, &zero, &state.m);
        assert!((at_zero.data_term - 1.0).abs() < 1e-14);
        assert!((at_zero.state_term - 1.0).abs() < 1e-14);
        assert!(state.current().total < at_zero.total);
        let m0 = vec![ZERO; ops.len()];
        assert!(functional_value(&ops, &f, &zero, &m0).degenerate);
        assert!(state.history[0].total.is_finite());
    }

    #[test]
    fn exact_solution_has_zero_functional() {
        let (ops, _, _) = scene_problem(false);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m: Vec<C> = (0..ops.len()).map(|_| C::new(rng.gen_range(-0.5..0.0), rng.gen_range(-0.1..0.0))).collect();
        // Solve w = m (u_inc - G w) densely for each source.
        let dense = dense_domain(&ops);
        let n = ops.len();
        let a = nalgebra::DMatrix::<C>::from_fn(n, n, |i, j| {
            let id = if i == j { C::new(1.0, 0.0) } else { ZERO };
            id + m[i] * dense[j][i]
        });
        let lu = a.lu();
        let w: Vec<Vec<C>> = ops
            .incident
            .iter()
            .map(|ui| {
                let b = nalgebra::DVector::from_iterator(n, ui.iter().zip(&m).map(|(u, mi)| mi * u));
                lu.solve(&b).unwrap().iter().copied().collect()
            })
            .collect();
        let f: Vec<Vec<C>> = w.iter().map(|ws| ops.apply_data(ws)).collect();
        let v = functional_value(&ops, &f, &w, &m);
        assert!(v.total < 1e-20, "{v:?}");
        let mut state = backpropagation_init(&ops, &f, StateNormalization::Current, false).unwrap();
        for (src, ws) in state.sources.iter_mut().zip(&w) {
            src.w = ws.clone();
            src.kw = ops.apply_data(ws);
            src.gw = ops.apply_domain(ws);
        }
        state.m = m.clone();
        let before = state.m.clone();
        state.history.push(state.evaluate(&ops, &f, &m));
        csi_step(&mut state, &ops, &f, false);
        let moved: f64 = state.m.iter().zip(&before).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(moved < 1e-8);

        // A perturbed source gives a functional quadratic in the perturbation.
        let delta: Vec<Vec<C>> = (0..w.len()).map(|_| random_vec(&mut rng, n)).collect();
        let at = |t: f64| {
            let wp: Vec<Vec<C>> =
                w.iter().zip(&delta).map(|(a, d)| a.iter().zip(d).map(|(x, y)| x + t * y).collect()).collect();
            functional_value(&ops, &f, &wp, &m).total
        };
        let ratio = at(1e-3) / at(5e-4);
        assert!((ratio - 4.0).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = grid(14, 0.05);
            let t = square_mask(g, 4, 4, rng.gen_range(3..=6));
            let bg = if seed % 2 == 0 { barrier(g) } else { MediumMap::uniform(g, Material::VACUUM) };
            let bg = build_artificial_background(&bg, &t).unwrap();
            let s = rng.gen_range(1..=3);
            let ops = build_csi_operators(&bg, &t, &ring(s, 1.0), F, 1e-10, 1).unwrap();
            let n = ops.len();
            let f: Vec<Vec<C>> = (0..s).map(|_| random_vec(&mut rng, s)).collect();
            let w: Vec<Vec<C>> = (0..s).map(|_| random_vec(&mut rng, n)).collect();
            let m = random_vec(&mut rng, n);
            let d: Vec<Vec<C>> = (0..s).map(|_| random_vec(&mut rng, n)).collect();
            let grad = functional_gradient(&ops, &f, &w, &m);
            let analytic: f64 = 2.0 * grad.iter().zip(&d).map(|(a, b)| dot(a, b).re).sum::<f64>();
            let eps = 1e-5;
            let shifted = |t: f64| {
                let wp: Vec<Vec<C>> =
                    w.iter().zip(&d).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + t * y).collect()).collect();
                functional_value(&ops, &f, &wp, &m).total
            };
            let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            assert!((fd - analytic).abs() <= 1e-6 * analytic.abs(), "seed {seed}: {fd} vs {analytic}");
        }
    }

    #[test]
    fn contrast_update_is_stationary() {
        let (ops, f, mut state) = scene_problem(false);
        csi_step(&mut state, &ops, &f, false);
        let w: Vec<Vec<C>> = state.sources.iter().map(|s| s.w.clone()).collect();
        let m = update_contrast(&ops, &state.sources, false);
        let numerator = |m: &[C]| -> f64 {
            w.iter()
                .zip(&ops.incident)
                .map(|(ws, ui)| norm_sqr(&state_residual(m, ui, &ops.apply_domain(ws), ws)))
                .sum()
        };
        let base = numerator(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let dir = random_vec(&mut rng, ops.len());
            let mp: Vec<C> = m.iter().zip(&dir).map(|(a, b)| a + 1e-4 * b).collect();
            assert!(numerator(&mp) >= base * (1.0 - 1e-14));
        }
    }

    #[test]
    fn history_is_monotone_and_data_fit_improves() {
        let (ops, f, _) = scene_problem(false);
        let config = CsiConfig { max_iter: 200, ..Default::default() };
        let result = run_with_operators(&ops, &f, &config).unwrap();
        assert!(result.history.windows(2).all(|h| h[1].total <= h[0].total));
        let last = result.history.last().unwrap();
        assert!(last.data_term < 0.05 * result.history[0].data_term.max(1e-3), "{last:?}");
    }

    #[test]
    fn scaling_covariance() {
        let (ops, f, _) = scene_problem(false);
        let c = C::new(-2.0, 3.0);
        let mut scaled = CsiOperators {
            incident: ops.incident.iter().map(|u| u.iter().map(|v| v * c).collect()).collect(),
            ..clone_ops(&ops)
        };
        scaled.background_response = ops.background_response.clone();
        let fs: Vec<Vec<C>> = f.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let config = CsiConfig { max_iter: 20, ..Default::default() };
        let a = run_with_operators(&ops, &f, &config).unwrap();
        let b = run_with_operators(&scaled, &fs, &config).unwrap();
        let diff = a.contrast.values.iter().zip(&b.contrast.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-8 * a.contrast.sup_norm(), "{diff}");
        for (x, y) in a.history.iter().zip(&b.history) {
            assert!((x.total - y.total).abs() < 1e-10 * x.total);
        }
    }

    fn clone_ops(ops: &CsiOperators) -> CsiOperators {
        CsiOperators {
            grid: ops.grid,
            cells: ops.cells.clone(),
            k0t: ops.k0t,
            n0t: ops.n0t,
            omega: ops.omega,
            window: ops.window,
            box_kernel: LsKernel::new(*ops.box_kernel.grid(), ops.k0t).unwrap(),
            local_in_box: ops.local_in_box.clone(),
            correction: ops.correction.clone(),
            data_op: ops.data_op.clone(),
            n_receivers: ops.n_receivers,
            incident: ops.incident.clone(),
            background_response: ops.background_response.clone(),
        }
    }

    #[test]
    fn zero_data_gives_zero_contrast() {
        let (ops, f, _) = scene_problem(false);
        let zero: Vec<Vec<C>> = f.iter().map(|r| vec![ZERO; r.len()]).collect();
        let result = run_with_operators(&ops, &zero, &CsiConfig { max_iter: 5, ..Default::default() }).unwrap();
        assert!(result.contrast.is_zero());
        assert!(result.history[0].degenerate);
    }

    #[test]
    fn positivity_projection_holds() {
        let (ops, f, _) = scene_problem(true);
        let config = CsiConfig { max_iter: 30, positivity: true, ..Default::default() };
        let result = run_with_operators(&ops, &f, &config).unwrap();
        let maps = contrast_to_physical(&result.contrast, ops.n0t, ops.omega).unwrap();
        assert_eq!(maps.clipped, 0);
    }

    #[test]
    fn block_correction_converges_to_exact() {
        let (_, _, exact) = inhomogeneous_ops(1);
        let (_, _, coarse) = inhomogeneous_ops(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_vec(&mut rng, exact.len());
        let a = exact.apply_domain(&w);
        let b = coarse.apply_domain(&w);
        let diff: Vec<C> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(norm(&diff) < 0.2 * norm(&a));
    }

    #[test]
    fn physical_conversion() {
        let g = grid(3, 1.0);
        let omega = 2.0 * std::f64::consts::PI * 1e9;
        let n0 = C::new(1.0, 0.0);
        let zero = ContrastMap::zeros(g);
        let p = contrast_to_physical(&zero, C::new(10.0, 0.5), omega).unwrap();
        assert!(p.eps_r.iter().all(|&e| e == 10.0));
        assert!(p.sigma.iter().all(|&s| (s - 0.5 * omega * EPS0).abs() < 1e-15));
        let minus_one = ContrastMap::from_values(g, vec![C::new(-1.0, 0.0); 9]).unwrap();
        let p = contrast_to_physical(&minus_one, n0, omega).unwrap();
        assert!(p.eps_r.iter().all(|&e| (e - 2.0).abs() < 1e-15) && p.sigma.iter().all(|&s| s == 0.0));
        let mat = Material::new(3.5, 0.2);
        let n = mat.refractive_index(omega).unwrap();
        let m = ContrastMap::from_values(g, vec![(n0 - n) / n0; 9]).unwrap();
        let p = contrast_to_physical(&m, n0, omega).unwrap();
        assert!((p.eps_r[0] - 3.5).abs() < 1e-12 && (p.sigma[0] - 0.2).abs() < 1e-12);
        let bad = ContrastMap::from_values(g, vec![C::new(0.5, 0.1); 9]).unwrap();
        assert_eq!(contrast_to_physical(&bad, n0, omega).unwrap().clipped, 9);
        assert!(contrast_to_physical(&zero, n0, 0.0).is_err());
    }
}
