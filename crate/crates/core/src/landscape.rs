//! Two-parameter tunneling landscape `T(c_scaled, v)` and its ridge/valley
//! structure.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv::fmt_f;
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::spin::SpinOperators;
use crate::tunneling::{analyze_point, SweepAxis, Validity};

/// Inclusive uniform axis with `steps` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl AxisSpec {
    pub fn new(min: f64, max: f64, steps: usize) -> Self {
        AxisSpec { min, max, steps }
    }

    pub fn validate(&self, field: &'static str) -> Result<()> {
        if !self.min.is_finite() || !self.max.is_finite() || !(self.max > self.min) {
            return Err(Error::invalid(field, "range must satisfy min < max"));
        }
        if self.steps < 2 {
            return Err(Error::invalid(field, "need at least two steps"));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.steps - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.steps).map(|k| self.min + h * k as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_scaled: AxisSpec,
    pub v: AxisSpec,
}

impl GridSpec {
    /// Window containing the resonances discussed for N = 30.
    pub fn default_window(resolution: usize) -> Self {
        GridSpec {
            c_scaled: AxisSpec::new(1.0, 3.2, resolution),
            v: AxisSpec::new(0.5, 1.5, resolution),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.c_scaled.validate("c_scaled")?;
        self.v.validate("v")?;
        if self.c_scaled.steps < 16 || self.v.steps < 16 {
            return Err(Error::invalid("resolution", "need at least 16 points per axis"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.c_scaled.steps * self.v.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub validity: Validity,
    /// `None` without islands; `+inf` is the censoring sentinel (exact crossing).
    pub log10_t: Option<f64>,
    /// `eps_- - eps_+`, wrapped.
    pub signed_splitting: Option<f64>,
    pub overlap_sum: Option<f64>,
    /// Decomposition indices of the doublet members.
    pub doublet: Option<(usize, usize)>,
}

impl Cell {
    pub fn is_censored(&self) -> bool {
        self.log10_t == Some(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub template: SystemParams,
    pub spec: GridSpec,
    pub c_scaled_values: Vec<f64>,
    pub v_values: Vec<f64>,
    /// Row-major, rows indexed by `v`.
    pub cells: Vec<Cell>,
    /// Seconds since the epoch; informational only.
    pub timestamp: u64,
}

fn evaluate_cell(template: &SystemParams, ops: &SpinOperators, c_scaled: f64, v: f64) -> Result<Cell> {
    let params = SweepAxis::CScaled.apply(&SweepAxis::V.apply(template, v), c_scaled);
    let a = analyze_point(&params, ops)?;
    Ok(match a.result {
        Some(r) => Cell {
            validity: a.validity,
            log10_t: Some(r.log10_t()),
            signed_splitting: Some(r.signed_splitting()),
            overlap_sum: Some(r.overlap_sum()),
            doublet: Some(r.doublet_indices),
        },
        None => Cell {
            validity: Validity::NoIsland,
            log10_t: None,
            signed_splitting: None,
            overlap_sum: None,
            doublet: None,
        },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    template: SystemParams,
    spec: GridSpec,
    /// One char per cell, '1' once computed.
    done: String,
    cells: Vec<Option<Cell>>,
}

/// Evaluates every cell. Results are gathered by index, so the grid does
/// not depend on the number of workers.
pub fn compute_landscape(n: usize, spec: &GridSpec, template: &SystemParams) -> Result<LandscapeGrid> {
    compute_landscape_resumable(n, spec, template, None)
}

/// As [`compute_landscape`], persisting progress row by row to `checkpoint`
/// and resuming from it when it matches the requested grid.
pub fn compute_landscape_resumable(
    n: usize,
    spec: &GridSpec,
    template: &SystemParams,
    checkpoint: Option<&Path>,
) -> Result<LandscapeGrid> {
    spec.validate()?;
    let template = template.with_n(n);
    template.validate()?;
    let ops = SpinOperators::new(n)?;
    let cs = spec.c_scaled.values();
    let vs = spec.v.values();
    let total = spec.len();

    let mut cells: Vec<Option<Cell>> = vec![None; total];
    if let Some(path) = checkpoint {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(cp) = serde_json::from_str::<Checkpoint>(&text) {
                if cp.template == template && cp.spec == *spec && cp.cells.len() == total {
                    for (k, flag) in cp.done.chars().enumerate() {
                        if flag == '1' {
                            cells[k] = cp.cells[k];
                        }
                    }
                    log::info!(
                        "resuming landscape: {} of {total} cells done",
                        cells.iter().flatten().count()
                    );
                }
            }
        }
    }

    let width = cs.len();
    for (iv, &v) in vs.iter().enumerate() {
        let row = &mut cells[iv * width..(iv + 1) * width];
        if row.iter().all(Option::is_some) {
            continue;
        }
        let fresh = row
            .par_iter()
            .zip(cs.par_iter())
            .map(|(done, &c)| match done {
                Some(cell) => Ok(*cell),
                None => evaluate_cell(&template, &ops, c, v),
            })
            .collect::<Result<Vec<_>>>()?;
        for (slot, cell) in row.iter_mut().zip(fresh) {
            *slot = Some(cell);
        }
        if let Some(path) = checkpoint {
            let cp = Checkpoint {
                template,
                spec: *spec,
                done: cells
                    .iter()
                    .map(|c| if c.is_some() { '1' } else { '0' })
                    .collect(),
                cells: cells.clone(),
            };
            let json = serde_json::to_string(&cp).map_err(|e| Error::Numerical(e.to_string()))?;
            fs::write(path, json).map_err(|e| Error::invalid("checkpoint", e.to_string()))?;
        }
    }

    Ok(LandscapeGrid {
        template,
        spec: *spec,
        c_scaled_values: cs,
        v_values: vs,
        cells: cells
            .into_iter()
            .map(|c| c.expect("every cell evaluated"))
            .collect(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

impl LandscapeGrid {
    pub fn width(&self) -> usize {
        self.c_scaled_values.len()
    }

    pub fn height(&self) -> usize {
        self.v_values.len()
    }

    pub fn cell(&self, ic: usize, iv: usize) -> &Cell {
        &self.cells[iv * self.width() + ic]
    }

    /// Index of the row whose `v` equals `v` exactly.
    pub fn row_index(&self, v: f64) -> Option<usize> {
        self.v_values.iter().position(|&x| x == v)
    }

    pub fn row(&self, iv: usize) -> &[Cell] {
        &self.cells[iv * self.width()..(iv + 1) * self.width()]
    }

    /// Long format: `c_scaled,v,log10_T,validity`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "c_scaled,v,log10_T,validity")?;
        for (iv, &v) in self.v_values.iter().enumerate() {
            for (ic, &c) in self.c_scaled_values.iter().enumerate() {
                let cell = self.cell(ic, iv);
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_f(c),
                    fmt_f(v),
                    fmt_f(cell.log10_t.unwrap_or(f64::NAN)),
                    cell.validity.as_str()
                )?;
            }
        }
        Ok(())
    }

    /// Axes plus row-major values; `null` without islands, `"inf"` when censored.
    pub fn to_json(&self) -> serde_json::Value {
        let values: Vec<serde_json::Value> = self
            .cells
            .iter()
            .map(|c| match c.log10_t {
                None => serde_json::Value::Null,
                Some(x) if x.is_infinite() => serde_json::Value::String("inf".into()),
                Some(x) => serde_json::json!(x),
            })
            .collect();
        let validity: Vec<&str> = self.cells.iter().map(|c| c.validity.as_str()).collect();
        serde_json::json!({
            "n": self.template.n,
            "tau": self.template.tau,
            "epsilon": self.template.epsilon,
            "grid": self.spec,
            "c_scaled": self.c_scaled_values,
            "v": self.v_values,
            "log10_T": values,
            "validity": validity,
            "timestamp": self.timestamp,
        })
    }

    /// False-colour heat map, `v` increasing upwards.
    pub fn to_svg(&self) -> String {
        let (w, h) = (self.width(), self.height());
        let px = 3usize;
        let finite: Vec<f64> = self
            .cells
            .iter()
            .filter_map(|c| c.log10_t)
            .filter(|x| x.is_finite())
            .collect();
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (margin, bar) = (50usize, 20usize);
        let total_w = w * px + 2 * margin + bar + 40;
        let total_h = h * px + 2 * margin;
        let mut s = String::new();
        s.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total_w}\" height=\"{total_h}\" shape-rendering=\"crispEdges\">\n"
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">log10 T, N = {}</text>\n",
            margin,
            margin / 2,
            self.template.n
        ));
        for iv in 0..h {
            for ic in 0..w {
                let cell = self.cell(ic, iv);
                let fill = match cell.log10_t {
                    None => "#808080".to_string(),
                    Some(x) if x.is_infinite() => "#ff00ff".to_string(),
                    Some(x) => colormap((x - lo) / span),
                };
                let y = margin + (h - 1 - iv) * px;
                s.push_str(&format!(
                    "<rect x=\"{}\" y=\"{y}\" width=\"{px}\" height=\"{px}\" fill=\"{fill}\"/>\n",
                    margin + ic * px
                ));
            }
        }
        let x0 = margin + w * px + 15;
        for k in 0..h * px {
            let t = 1.0 - k as f64 / (h * px - 1).max(1) as f64;
            s.push_str(&format!(
                "<rect x=\"{x0}\" y=\"{}\" width=\"{bar}\" height=\"1\" fill=\"{}\"/>\n",
                margin + k,
                colormap(t)
            ));
        }
        s.push_str(&format!(
            "<text x=\"{x0}\" y=\"{}\" font-size=\"10\">{hi:.1}</text>\n<text x=\"{x0}\" y=\"{}\" font-size=\"10\">{lo:.1}</text>\n",
            margin - 4,
            margin + h * px + 12
        ));
        s.push_str(&format!(
            "<text x=\"{margin}\" y=\"{}\" font-size=\"11\">c_scaled {:.3} .. {:.3}</text>\n",
            total_h - 15,
            self.c_scaled_values[0],
            self.c_scaled_values[w - 1]
        ));
        s.push_str(&format!(
            "<text x=\"5\" y=\"{}\" font-size=\"11\">v {:.3} .. {:.3}</text>\n",
            margin - 4,
            self.v_values[0],
            self.v_values[h - 1]
        ));
        s.push_str("</svg>\n");
        s
    }
}

/// Blue-green-yellow ramp on `[0, 1]`.
fn colormap(t: f64) -> String {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.25, [59.0, 82.0, 139.0]),
        (0.5, [33.0, 145.0, 140.0]),
        (0.75, [94.0, 201.0, 98.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let k = STOPS
        .iter()
        .rposition(|(x, _)| *x <= t)
        .unwrap_or(0)
        .min(STOPS.len() - 2);
    let (x0, a) = STOPS[k];
    let (x1, b) = STOPS[k + 1];
    let f = (t - x0) / (x1 - x0);
    let ch = |i: usize| (a[i] + f * (b[i] - a[i])).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Decades above (ridges) or below (valleys) the neighbourhood median.
    pub threshold: f64,
    /// Neighbourhood is the `(2r+1)^2` block around a cell.
    pub radius: usize,
    /// Components smaller than this are dropped.
    pub min_cells: usize,
    /// Largest gap, in cells, between two ridges that still counts as an
    /// avoided crossing.
    pub max_gap: f64,
    /// Also treat sub-cell zeros of the doublet splitting as ridge cells.
    pub splitting_zeros: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            threshold: 2.0,
            radius: 4,
            min_cells: 3,
            max_gap: 6.0,
            splitting_zeros: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    /// `(c_scaled, v)` vertices.
    pub points: Vec<(f64, f64)>,
    pub cells: usize,
    /// Cells that are censored (exact crossings).
    pub censored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvoidedPair {
    pub ridge_a: usize,
    pub ridge_b: usize,
    /// Midpoint of the closest approach.
    pub c_scaled: f64,
    pub v: f64,
    /// Closest approach in cells.
    pub gap: f64,
    /// A valley cell lies between the two ridges.
    pub valley_in_gap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub ridges: Vec<Polyline>,
    pub valleys: Vec<Polyline>,
    pub avoided_pairs: Vec<AvoidedPair>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    None,
    Ridge,
    Valley,
}

fn classify(grid: &LandscapeGrid, opts: &FeatureOptions) -> Vec<Mark> {
    let (w, h) = (grid.width(), grid.height());
    let val = |ic: usize, iv: usize| grid.cell(ic, iv).log10_t;
    let r = opts.radius as isize;
    let mut marks = vec![Mark::None; w * h];
    for iv in 0..h {
        for ic in 0..w {
            let Some(x) = val(ic, iv) else { continue };
            if x.is_infinite() {
                marks[iv * w + ic] = Mark::Ridge;
                continue;
            }
            let mut hood = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
            for dv in -r..=r {
                for dc in -r..=r {
                    let (jc, jv) = (ic as isize + dc, iv as isize + dv);
                    if jc < 0 || jv < 0 || jc >= w as isize || jv >= h as isize {
                        continue;
                    }
                    if let Some(y) = val(jc as usize, jv as usize) {
                        hood.push(y);
                    }
                }
            }
            let Some(med) = median(&mut hood) else { continue };
            // extremum along at least one axis; missing neighbours do not count
            let along = |cmp: &dyn Fn(f64) -> bool| {
                let pair = |a: Option<f64>, b: Option<f64>| a.is_some_and(cmp) && b.is_some_and(cmp);
                let left = if ic > 0 { val(ic - 1, iv) } else { None };
                let right = if ic + 1 < w { val(ic + 1, iv) } else { None };
                let down = if iv > 0 { val(ic, iv - 1) } else { None };
                let up = if iv + 1 < h { val(ic, iv + 1) } else { None };
                pair(left, right) || pair(down, up)
            };
            if x - med >= opts.threshold && along(&|y| y <= x) {
                marks[iv * w + ic] = Mark::Ridge;
            } else if med - x >= opts.threshold && along(&|y| y >= x) {
                marks[iv * w + ic] = Mark::Valley;
            }
        }
    }
    if opts.splitting_zeros {
        mark_splitting_zeros(grid, &mut marks);
    }
    marks
}

/// Marks the cell next to each sub-cell zero of the doublet splitting.
///
/// A sign flip between neighbours counts only when both splittings are far
/// from the zone edge and the step is not an outlier against the adjacent
/// steps on the same line: a swap of one doublet member at an avoided
/// crossing also flips the sign, but as a jump.
fn mark_splitting_zeros(grid: &LandscapeGrid, marks: &mut [Mark]) {
    let (w, h) = (grid.width(), grid.height());
    let edge = std::f64::consts::PI / (2.0 * grid.template.tau);
    let split = |ic: isize, iv: isize| -> Option<f64> {
        if ic < 0 || iv < 0 || ic >= w as isize || iv >= h as isize {
            return None;
        }
        grid.cell(ic as usize, iv as usize).signed_splitting
    };
    for iv in 0..h as isize {
        for ic in 0..w as isize {
            for (dc, dv) in [(1isize, 0isize), (0, 1)] {
                let (Some(sa), Some(sb)) = (split(ic, iv), split(ic + dc, iv + dv)) else {
                    continue;
                };
                if sa.abs() > edge || sb.abs() > edge || sa * sb > 0.0 {
                    continue;
                }
                let step = (sa - sb).abs();
                let before = split(ic - dc, iv - dv).map(|x| (x - sa).abs());
                let after = split(ic + 2 * dc, iv + 2 * dv).map(|x| (sb - x).abs());
                let typical = before.into_iter().chain(after).fold(0.0, f64::max);
                if typical > 0.0 && step > JUMP_FACTOR * typical {
                    continue;
                }
                let (jc, jv) = if sa.abs() <= sb.abs() {
                    (ic, iv)
                } else {
                    (ic + dc, iv + dv)
                };
                let k = jv as usize * w + jc as usize;
                if marks[k] == Mark::None {
                    marks[k] = Mark::Ridge;
                }
            }
        }
    }
}

/// A sign flip whose step exceeds the neighbouring steps by this factor is a
/// level swap, not a crossing.
const JUMP_FACTOR: f64 = 4.0;

/// 8-connected components of the cells carrying `mark`.
fn components(marks: &[Mark], w: usize, h: usize, mark: Mark) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; marks.len()];
    let mut out = Vec::new();
    for start in 0..marks.len() {
        if marks[start] != mark || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            let (ic, iv) = (k % w, k / w);
            comp.push((ic, iv));
            for dv in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (jc, jv) = (ic as isize + dc, iv as isize + dv);
                    if jc < 0 || jv < 0 || jc >= w as isize || jv >= h as isize {
                        continue;
                    }
                    let j = jv as usize * w + jc as usize;
                    if marks[j] == mark && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Collapses a component to a curve by averaging across its longer extent.
fn to_polyline(grid: &LandscapeGrid, comp: &[(usize, usize)]) -> Polyline {
    let span = |f: &dyn Fn(&(usize, usize)) -> usize| {
        let lo = comp.iter().map(f).min().unwrap_or(0);
        let hi = comp.iter().map(f).max().unwrap_or(0);
        hi - lo
    };
    let along_c = span(&|p| p.0) >= span(&|p| p.1);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(ic, iv) in comp {
        if along_c {
            groups.entry(ic).or_default().push(iv);
        } else {
            groups.entry(iv).or_default().push(ic);
        }
    }
    let points = groups
        .into_iter()
        .map(|(key, others)| {
            let mean = others.iter().sum::<usize>() as f64 / others.len() as f64;
            if along_c {
                (grid.c_scaled_values[key], interp(&grid.v_values, mean))
            } else {
                (interp(&grid.c_scaled_values, mean), grid.v_values[key])
            }
        })
        .collect();
    Polyline {
        points,
        cells: comp.len(),
        censored: comp
            .iter()
            .filter(|&&(ic, iv)| grid.cell(ic, iv).is_censored())
            .count(),
    }
}

fn interp(axis: &[f64], x: f64) -> f64 {
    let k = (x.floor() as usize).min(axis.len() - 1);
    if k + 1 >= axis.len() {
        return axis[k];
    }
    axis[k] + (x - k as f64) * (axis[k + 1] - axis[k])
}

pub fn extract_features(grid: &LandscapeGrid, opts: &FeatureOptions) -> FeatureSet {
    let (w, h) = (grid.width(), grid.height());
    let marks = classify(grid, opts);
    let keep = |comps: Vec<Vec<(usize, usize)>>| -> Vec<Vec<(usize, usize)>> {
        comps.into_iter().filter(|c| c.len() >= opts.min_cells).collect()
    };
    let ridges = keep(components(&marks, w, h, Mark::Ridge));
    let valleys = keep(components(&marks, w, h, Mark::Valley));
    let avoided_pairs = avoided_pairs(&ridges, &valleys, grid, opts);
    FeatureSet {
        ridges: ridges.iter().map(|c| to_polyline(grid, c)).collect(),
        valleys: valleys.iter().map(|c| to_polyline(grid, c)).collect(),
        avoided_pairs,
    }
}

fn dist(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dc = a.0 as f64 - b.0 as f64;
    let dv = a.1 as f64 - b.1 as f64;
    dc.hypot(dv)
}

/// Whether `p` is at least two cells away from both extremes of the
/// component along its longer extent.
fn interior(comp: &[(usize, usize)], p: (usize, usize)) -> bool {
    let (cmin, cmax) = (
        comp.iter().map(|q| q.0).min().unwrap(),
        comp.iter().map(|q| q.0).max().unwrap(),
    );
    let (vmin, vmax) = (
        comp.iter().map(|q| q.1).min().unwrap(),
        comp.iter().map(|q| q.1).max().unwrap(),
    );
    if cmax - cmin >= vmax - vmin {
        p.0 >= cmin + 2 && p.0 + 2 <= cmax
    } else {
        p.1 >= vmin + 2 && p.1 + 2 <= vmax
    }
}

/// Pairs of distinct ridges whose closest approach lies inside both of them:
/// the two branches of an avoided crossing rather than one broken ridge.
fn avoided_pairs(
    ridges: &[Vec<(usize, usize)>],
    valleys: &[Vec<(usize, usize)>],
    grid: &LandscapeGrid,
    opts: &FeatureOptions,
) -> Vec<AvoidedPair> {
    let mut out = Vec::new();
    for a in 0..ridges.len() {
        for b in a + 1..ridges.len() {
            let mut best = (f64::INFINITY, (0, 0), (0, 0));
            for &p in &ridges[a] {
                for &q in &ridges[b] {
                    let d = dist(p, q);
                    if d < best.0 {
                        best = (d, p, q);
                    }
                }
            }
            let (gap, p, q) = best;
            if gap > opts.max_gap || !interior(&ridges[a], p) || !interior(&ridges[b], q) {
                continue;
            }
            let mid = ((p.0 + q.0) as f64 / 2.0, (p.1 + q.1) as f64 / 2.0);
            let valley_in_gap = valleys.iter().flatten().any(|&r| {
                let d = (r.0 as f64 - mid.0).hypot(r.1 as f64 - mid.1);
                d <= gap / 2.0 + 1.0
            });
            out.push(AvoidedPair {
                ridge_a: a,
                ridge_b: b,
                c_scaled: interp(&grid.c_scaled_values, mid.0),
                v: interp(&grid.v_values, mid.1),
                gap,
                valley_in_gap,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64, f64) -> Option<f64>, w: usize, h: usize) -> LandscapeGrid {
        let spec = GridSpec {
            c_scaled: AxisSpec::new(0.0, 1.0, w),
            v: AxisSpec::new(0.0, 1.0, h),
        };
        let cs = spec.c_scaled.values();
        let vs = spec.v.values();
        let mut cells = Vec::new();
        for &v in &vs {
            for &c in &cs {
                let x = f(c, v);
                cells.push(Cell {
                    validity: if x.is_some() {
                        Validity::Valid
                    } else {
                        Validity::NoIsland
                    },
                    log10_t: x,
                    signed_splitting: None,
                    overlap_sum: None,
                    doublet: None,
                });
            }
        }
        LandscapeGrid {
            template: SystemParams::with_c_scaled(30, 2.0, 1.0, 1.0).unwrap(),
            spec,
            c_scaled_values: cs,
            v_values: vs,
            cells,
            timestamp: 0,
        }
    }

    #[test]
    fn axis_values_hit_dyadic_nodes() {
        let a = AxisSpec::new(0.375, 1.6171875, 160);
        let v = a.values();
        assert_eq!(v.len(), 160);
        assert_eq!(v[80], 1.0);
        assert_eq!(v[159], 1.6171875);
        assert!(v.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::default_window(160).validate().is_ok());
        assert!(GridSpec::default_window(8).validate().is_err());
        let mut g = GridSpec::default_window(20);
        g.v.max = g.v.min;
        assert!(matches!(
            g.validate(),
            Err(Error::InvalidParameter { field: "v", .. })
        ));
    }

    #[test]
    fn flat_grid_has_no_features() {
        let g = synthetic(|c, v| Some(2.0 + 0.3 * c + 0.1 * v), 30, 30);
        let f = extract_features(&g, &FeatureOptions::default());
        assert!(f.ridges.is_empty() && f.valleys.is_empty() && f.avoided_pairs.is_empty());
    }

    #[test]
    fn straight_ridge_and_valley() {
        let g = synthetic(
            |c, v| {
                let d = c - (0.3 + 0.2 * v);
                let e = c - 0.8;
                Some(3.0 + 4.0 * (-d * d / 1e-3).exp() - 3.0 * (-e * e / 1e-3).exp())
            },
            40,
            40,
        );
        let f = extract_features(&g, &FeatureOptions::default());
        assert_eq!(f.ridges.len(), 1, "{:?}", f.ridges);
        assert_eq!(f.valleys.len(), 1);
        // one vertex per row: a one-dimensional curve following the ridge line
        let r = &f.ridges[0];
        assert_eq!(r.points.len(), 40);
        for &(c, v) in &r.points {
            assert!((c - (0.3 + 0.2 * v)).abs() < 0.03, "{c} {v}");
        }
        assert!(f.avoided_pairs.is_empty());
    }

    #[test]
    fn censored_cells_are_ridges() {
        let g = synthetic(
            |c, _| {
                Some(if (c - 0.5).abs() < 0.01 {
                    f64::INFINITY
                } else {
                    3.0
                })
            },
            31,
            30,
        );
        let f = extract_features(&g, &FeatureOptions::default());
        assert_eq!(f.ridges.len(), 1);
        assert_eq!(f.ridges[0].censored, 30);
    }

    #[test]
    fn avoided_crossing_detected() {
        // two hyperbola branches c - 0.5 = +-sqrt((v-0.5)^2 + g^2) with a dip between
        let g = synthetic(
            |c, v| {
                let r = ((v - 0.5).powi(2) + 0.05f64.powi(2)).sqrt();
                let a = c - 0.5 - r;
                let b = c - 0.5 + r;
                let dip = (c - 0.5).powi(2) + (v - 0.5).powi(2);
                Some(
                    3.0 + 4.0 * (-a * a / 2e-4).exp() + 4.0 * (-b * b / 2e-4).exp()
                        - 3.0 * (-dip / 1e-3).exp(),
                )
            },
            61,
            61,
        );
        let f = extract_features(&g, &FeatureOptions::default());
        assert_eq!(f.ridges.len(), 2, "{:?}", f.ridges.len());
        assert_eq!(f.avoided_pairs.len(), 1);
        let p = f.avoided_pairs[0];
        assert!((p.c_scaled - 0.5).abs() < 0.05 && (p.v - 0.5).abs() < 0.05);
        assert!(p.valley_in_gap);
    }

    #[test]
    fn broken_ridge_is_not_an_avoided_crossing() {
        let g = synthetic(
            |c, v| {
                if (v - 0.5).abs() < 0.04 {
                    return Some(3.0);
                }
                let d = c - 0.5;
                Some(3.0 + 4.0 * (-d * d / 2e-4).exp())
            },
            41,
            40,
        );
        let f = extract_features(&g, &FeatureOptions::default());
        assert_eq!(f.ridges.len(), 2);
        assert!(f.avoided_pairs.is_empty());
    }

    #[test]
    fn splitting_zero_lines_are_ridges() {
        // crossing line c = 0.3 + 0.4 v, plus a level swap (jump) at c = 0.8
        let mut g = synthetic(|_, _| Some(3.0), 40, 40);
        let cs = g.c_scaled_values.clone();
        let vs = g.v_values.clone();
        for (iv, &v) in vs.iter().enumerate() {
            for (ic, &c) in cs.iter().enumerate() {
                let k = iv * 40 + ic;
                let mut s = 0.05 * (c - 0.3 - 0.4 * v);
                if c > 0.8 {
                    s -= 0.5;
                } else if c > 0.7 {
                    s += 0.2;
                }
                g.cells[k].signed_splitting = Some(s);
            }
        }
        let f = extract_features(&g, &FeatureOptions::default());
        assert_eq!(f.ridges.len(), 1, "{:?}", f.ridges);
        for &(c, v) in &f.ridges[0].points {
            assert!((c - 0.3 - 0.4 * v).abs() < 0.03);
        }
        let off = extract_features(
            &g,
            &FeatureOptions {
                splitting_zeros: false,
                ..Default::default()
            },
        );
        assert!(off.ridges.is_empty());
    }

    #[test]
    fn exports() {
        let g = synthetic(
            |c, v| match (c < 0.1, v < 0.1) {
                (true, true) => None,
                (true, false) => Some(f64::INFINITY),
                _ => Some(c + v),
            },
            16,
            16,
        );
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 256);
        assert!(text.contains(",nan,no_island"));
        assert!(text.contains(",inf,valid"));
        let j = g.to_json();
        assert_eq!(j["log10_T"].as_array().unwrap().len(), 256);
        assert!(j["log10_T"][0].is_null());
        assert_eq!(j["log10_T"][32], "inf");
        let svg = g.to_svg();
        assert!(svg.starts_with("<svg") && svg.contains("#ff00ff") && svg.contains("#808080"));
    }

    #[test]
    fn colormap_ends() {
        assert_eq!(colormap(0.0), "#440154");
        assert_eq!(colormap(1.0), "#fde725");
        assert_eq!(colormap(7.0), "#fde725");
    }

    #[test]
    fn small_landscape_is_deterministic_and_resumable() {
        let t = SystemParams::with_c_scaled(8, 2.0, 1.0, 1.0).unwrap();
        let spec = GridSpec {
            c_scaled: AxisSpec::new(1.5, 3.0, 16),
            v: AxisSpec::new(0.75, 1.125, 16),
        };
        let a = compute_landscape(8, &spec, &t).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("cp.json");
        let b = compute_landscape_resumable(8, &spec, &t, Some(&cp)).unwrap();
        assert_eq!(a.cells, b.cells);
        // a resumed run with a partially cleared checkpoint reproduces the grid
        let mut saved: Checkpoint = serde_json::from_str(&fs::read_to_string(&cp).unwrap()).unwrap();
        saved.done = saved
            .done
            .chars()
            .enumerate()
            .map(|(k, ch)| if k % 3 == 0 { '0' } else { ch })
            .collect();
        fs::write(&cp, serde_json::to_string(&saved).unwrap()).unwrap();
        let c = compute_landscape_resumable(8, &spec, &t, Some(&cp)).unwrap();
        assert_eq!(a.cells, c.cells);
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_csv(&mut x).unwrap();
        c.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
    }
}
