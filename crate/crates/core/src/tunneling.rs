//! Tunneling doublets, tunneling periods and resonance detection along
//! one-parameter sweeps.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv::fmt_f;
use crate::error::{Error, Result};
use crate::floquet::{
    circular_distance, diagonalize_floquet, propagate_with, signed_difference, FloquetDecomposition,
    FloquetOperator, Observers, Parity,
};
use crate::linalg::{c, CVector};
use crate::meanfield::{find_fixed_points, island_pair, FixedPoint};
use crate::params::SystemParams;
use crate::spin::{coherent_state, SpinOperators, StateVector};

/// Combined doublet overlap above which the two-state picture is trusted.
pub const TWO_STATE_THRESHOLD: f64 = 0.85;

/// Splittings below this are treated as exact degeneracies.
pub const MIN_SPLITTING: f64 = 1e-14;

/// Angular distance from `(+-s, 0, 0)` below which a fixed point is not an island.
const ISLAND_AXIS_TOL: f64 = 1e-3;

/// Coherent states centred on the two self-trapping islands.
#[derive(Debug, Clone)]
pub struct IslandStates {
    /// Northern island (well 1 populated).
    pub plus: StateVector,
    /// Southern island (well 2 populated).
    pub minus: StateVector,
    pub north: FixedPoint,
    pub south: FixedPoint,
}

pub fn island_states(params: &SystemParams) -> Result<IslandStates> {
    params.validate()?;
    let report = find_fixed_points(params);
    let (north, south) = island_pair(&report, ISLAND_AXIS_TOL).ok_or_else(|| {
        Error::NoIslands(format!(
            "no stable off-axis fixed-point pair at c_scaled = {}, v = {}",
            params.c_scaled(),
            params.v
        ))
    })?;
    Ok(IslandStates {
        plus: coherent_state(params.n, north.theta, north.phi)?,
        minus: coherent_state(params.n, south.theta, south.phi)?,
        north,
        south,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThirdLevel {
    pub index: usize,
    pub quasienergy: f64,
    pub parity: Parity,
    pub overlap: f64,
    /// Modulation period against the opposite-parity doublet member, in kicks.
    pub t_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunnelingResult {
    /// Indices into the decomposition: `(even member, odd member)`.
    pub doublet_indices: (usize, usize),
    pub eps_plus: f64,
    pub eps_minus: f64,
    /// Circular splitting, in `[0, pi/tau]`.
    pub delta_eps: f64,
    /// `2 pi / (delta_eps tau)` in kicks; infinite for an exact crossing.
    pub t_tunnel: f64,
    /// `(|<kappa_+|->|^2, |<kappa_-|->|^2)`
    pub overlaps: (f64, f64),
    /// `|<-|psi_->|^2` for the phase-fixed reconstruction.
    pub reconstruction_quality: f64,
    pub two_state_valid: bool,
    pub third_level: Option<ThirdLevel>,
    /// Smallest distance from a doublet member to another level of its own parity.
    pub same_parity_gap: f64,
    pub tau: f64,
}

impl TunnelingResult {
    pub fn overlap_sum(&self) -> f64 {
        self.overlaps.0 + self.overlaps.1
    }

    pub fn is_divergent(&self) -> bool {
        !self.t_tunnel.is_finite()
    }

    /// `eps_- - eps_+` wrapped into the zone; changes sign at a crossing.
    pub fn signed_splitting(&self) -> f64 {
        signed_difference(self.eps_minus, self.eps_plus, self.tau)
    }

    pub fn log10_t(&self) -> f64 {
        self.t_tunnel.log10()
    }
}

fn period_from_splitting(delta: f64, tau: f64) -> f64 {
    if delta > MIN_SPLITTING {
        2.0 * PI / (delta * tau)
    } else {
        f64::INFINITY
    }
}

pub fn identify_doublet(decomp: &FloquetDecomposition, minus: &StateVector) -> Result<TunnelingResult> {
    identify_doublet_with(decomp, minus, TWO_STATE_THRESHOLD)
}

/// Picks the top-overlap state with `|->` in each parity sector (without
/// parity labels: the two top-overlap states).
///
/// The next-best state overall is reported as the third level whenever one
/// exists, not only when the two-state picture fails.
pub fn identify_doublet_with(
    decomp: &FloquetDecomposition,
    minus: &StateVector,
    threshold: f64,
) -> Result<TunnelingResult> {
    let pops = decomp.populations(minus);
    let by_overlap = |a: &usize, b: &usize| pops[*a].total_cmp(&pops[*b]).then(b.cmp(a));
    let symmetric = decomp.parities.iter().all(|p| *p != Parity::None);
    let (ke, ko) = if symmetric {
        let best_in = |parity: Parity| decomp.sector(parity).into_iter().max_by(by_overlap);
        match (best_in(Parity::Even), best_in(Parity::Odd)) {
            (Some(e), Some(o)) => (e, o),
            _ => return Err(Error::invalid("decomp", "both parity sectors must be non-empty")),
        }
    } else {
        // no symmetry: the two largest overlaps, whatever their labels
        let mut order: Vec<usize> = (0..decomp.len()).collect();
        order.sort_by(|a, b| by_overlap(b, a));
        if order.len() < 2 {
            return Err(Error::invalid("decomp", "need at least two Floquet states"));
        }
        (order[0], order[1])
    };
    let tau = decomp.tau;
    let eps_plus = decomp.quasienergies[ke];
    let eps_minus = decomp.quasienergies[ko];
    let delta_eps = circular_distance(eps_plus, eps_minus, tau);
    let overlaps = (pops[ke], pops[ko]);
    let quality = (overlaps.0.sqrt() + overlaps.1.sqrt()).powi(2) / 2.0;

    let third_level = (0..decomp.len())
        .filter(|&k| k != ke && k != ko)
        .max_by(by_overlap)
        .map(|k| {
            // <L_z> is parity-odd: the visible modulation beats against the
            // doublet member of the other parity
            let partner = match decomp.parities[k] {
                Parity::Even => ko,
                Parity::Odd => ke,
                Parity::None => ko,
            };
            let d = circular_distance(decomp.quasienergies[k], decomp.quasienergies[partner], tau);
            ThirdLevel {
                index: k,
                quasienergy: decomp.quasienergies[k],
                parity: decomp.parities[k],
                overlap: pops[k],
                t_c: period_from_splitting(d, tau),
            }
        });

    let mut same_parity_gap = f64::INFINITY;
    for member in [ke, ko] {
        for k in decomp.sector(decomp.parities[member]) {
            if k != ke && k != ko {
                let d = circular_distance(decomp.quasienergies[k], decomp.quasienergies[member], tau);
                same_parity_gap = same_parity_gap.min(d);
            }
        }
    }

    Ok(TunnelingResult {
        doublet_indices: (ke, ko),
        eps_plus,
        eps_minus,
        delta_eps,
        t_tunnel: period_from_splitting(delta_eps, tau),
        overlaps,
        reconstruction_quality: quality,
        two_state_valid: overlaps.0 + overlaps.1 >= threshold,
        third_level,
        same_parity_gap,
        tau,
    })
}

/// `|psi_+-> = (|kappa_+> -+ e^{i alpha}|kappa_->)/sqrt 2` with `alpha` (and the
/// global phase) chosen so that `<-|psi_->` is real, positive and maximal.
pub fn reconstruct_islands(
    decomp: &FloquetDecomposition,
    doublet: &TunnelingResult,
    minus: &StateVector,
) -> (StateVector, StateVector) {
    let (ke, ko) = doublet.doublet_indices;
    let kp = decomp.states[ke].amplitudes();
    let km = decomp.states[ko].amplitudes();
    let a = minus.amplitudes().dotc(kp);
    let b = minus.amplitudes().dotc(km);
    let unit = |z: Complex64| if z.norm() > 0.0 { z / z.norm() } else { c(1.0) };
    // <-|kappa_+> e^{-i g} and <-|kappa_-> e^{i alpha - i g} both real positive
    let g = unit(a).conj();
    let rel = unit(a) * unit(b).conj();
    let kp = kp * g;
    let km = km * (rel * g);
    let s = c(std::f64::consts::FRAC_1_SQRT_2);
    let psi_plus = (&kp - &km) * s;
    let psi_minus = (&kp + &km) * s;
    (StateVector::from_raw(psi_plus), StateVector::from_raw(psi_minus))
}

/// Matrix elements of the doublet model for `<L(n tau)>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelModel {
    pub l_plus: [f64; 3],
    pub l_minus: [f64; 3],
    /// `<-|L|+>`
    pub l_mp: [Complex64; 3],
    /// `(eps_- - eps_+) tau`
    pub phase_step: f64,
}

impl TwoLevelModel {
    pub fn new(
        doublet: &TunnelingResult,
        ops: &SpinOperators,
        minus: &StateVector,
        plus: &StateVector,
    ) -> Self {
        let lm = minus.amplitudes();
        let lp = plus.amplitudes();
        let element = |op: &crate::linalg::CMatrix, bra: &CVector, ket: &CVector| bra.dotc(&(op * ket));
        let mut l_plus = [0.0; 3];
        let mut l_minus = [0.0; 3];
        let mut l_mp = [c(0.0); 3];
        for (k, op) in ops.components().iter().enumerate() {
            l_plus[k] = element(op, lp, lp).re;
            l_minus[k] = element(op, lm, lm).re;
            l_mp[k] = element(op, lm, lp);
        }
        TwoLevelModel {
            l_plus,
            l_minus,
            l_mp,
            phase_step: signed_difference(doublet.eps_minus, doublet.eps_plus, doublet.tau) * doublet.tau,
        }
    }

    /// `|Im L_-+|`
    pub fn im_l_mp_norm(&self) -> f64 {
        self.l_mp.iter().map(|z| z.im * z.im).sum::<f64>().sqrt()
    }

    /// `<L>` after `n` kicks starting from `|->`.
    pub fn at(&self, n: u64) -> [f64; 3] {
        self.at_phase(n as f64 * self.phase_step)
    }

    /// Expectation in `(|+>(1 - e^{-i phi}) + |->(1 + e^{-i phi}))/2`.
    pub fn at_phase(&self, phi: f64) -> [f64; 3] {
        let (s, co) = phi.sin_cos();
        std::array::from_fn(|k| {
            0.5 * (1.0 - co) * self.l_plus[k] + 0.5 * (1.0 + co) * self.l_minus[k] - s * self.l_mp[k].im
        })
    }
}

pub fn two_level_prediction(
    doublet: &TunnelingResult,
    ops: &SpinOperators,
    minus: &StateVector,
    plus: &StateVector,
    n: u64,
) -> [f64; 3] {
    TwoLevelModel::new(doublet, ops, minus, plus).at(n)
}

/// Tunneling period read off a propagation from `|->`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PropagationPeriod {
    /// Twice the kick at which `|<+|psi>|^2` peaks during the first transfer.
    Transfer {
        period: f64,
        peak_kick: usize,
        peak_population: f64,
    },
    /// `|+>` never overtook `|->` within the horizon.
    Censored { horizon: usize },
}

impl PropagationPeriod {
    pub fn period(&self) -> Option<f64> {
        match self {
            PropagationPeriod::Transfer { period, .. } => Some(*period),
            PropagationPeriod::Censored { .. } => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, PropagationPeriod::Censored { .. })
    }
}

pub fn tunneling_period_from_propagation(
    params: &SystemParams,
    max_kicks: usize,
) -> Result<PropagationPeriod> {
    let ops = SpinOperators::new(params.n)?;
    let islands = island_states(params)?;
    let fop = FloquetOperator::new(params, &ops)?;
    transfer_period(&fop, &ops, &islands, max_kicks)
}

/// The transfer window opens when `p_+ > p_-` and closes once `p_-` is back on
/// top with `p_+` below half its running peak, so jitter at the crossover does
/// not end it early.
pub fn transfer_period(
    fop: &FloquetOperator,
    ops: &SpinOperators,
    islands: &IslandStates,
    max_kicks: usize,
) -> Result<PropagationPeriod> {
    let observers = Observers {
        islands: Some((islands.plus.clone(), islands.minus.clone())),
    };
    let mut open = false;
    let mut peak = (0usize, f64::NEG_INFINITY);
    propagate_with(&islands.minus, fop, ops, max_kicks, &observers, |s| {
        if !open {
            if s.p_plus > s.p_minus {
                open = true;
                peak = (s.kick, s.p_plus);
            }
            return true;
        }
        if s.p_plus > peak.1 {
            peak = (s.kick, s.p_plus);
        }
        !(s.p_minus > s.p_plus && s.p_plus < 0.5 * peak.1)
    })?;
    Ok(if open {
        PropagationPeriod::Transfer {
            period: 2.0 * peak.0 as f64,
            peak_kick: peak.0,
            peak_population: peak.1,
        }
    } else {
        PropagationPeriod::Censored { horizon: max_kicks }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    /// Islands exist but the doublet carries less than the threshold overlap.
    Gap,
    NoIsland,
}

impl Validity {
    pub fn as_str(self) -> &'static str {
        match self {
            Validity::Valid => "valid",
            Validity::Gap => "gap",
            Validity::NoIsland => "no_island",
        }
    }
}

/// Full per-point pipeline: islands, Floquet spectrum, doublet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointAnalysis {
    pub params: SystemParams,
    pub validity: Validity,
    pub result: Option<TunnelingResult>,
}

pub fn analyze_point(params: &SystemParams, ops: &SpinOperators) -> Result<PointAnalysis> {
    let islands = match island_states(params) {
        Ok(i) => i,
        Err(Error::NoIslands(_)) => {
            return Ok(PointAnalysis {
                params: *params,
                validity: Validity::NoIsland,
                result: None,
            })
        }
        Err(e) => return Err(e),
    };
    let fop = FloquetOperator::new(params, ops)?;
    let decomp = diagonalize_floquet(&fop, ops)?;
    let result = identify_doublet(&decomp, &islands.minus)?;
    Ok(PointAnalysis {
        params: *params,
        validity: if result.two_state_valid {
            Validity::Valid
        } else {
            Validity::Gap
        },
        result: Some(result),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    N,
    CScaled,
    V,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::CScaled => "c_scaled",
            SweepAxis::V => "v",
        }
    }

    /// Parameters for one sweep value. Shared with the landscape so that
    /// rows and columns reproduce the one-parameter sweeps bit for bit.
    pub fn apply(self, template: &SystemParams, value: f64) -> SystemParams {
        match self {
            SweepAxis::N => {
                let cs = template.c_scaled();
                template.with_n(value as usize).at_c_scaled(cs)
            }
            SweepAxis::CScaled => template.at_c_scaled(value),
            SweepAxis::V => template.with_v(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: f64,
    pub analysis: PointAnalysis,
}

impl SweepPoint {
    pub fn result(&self) -> Option<&TunnelingResult> {
        self.analysis.result.as_ref()
    }

    /// Set exactly where the two-state picture fails (or has no islands).
    pub fn is_gap(&self) -> bool {
        self.analysis.validity != Validity::Valid
    }

    /// `log10 T`, `None` without islands, `+inf` at a crossing.
    pub fn log10_t(&self) -> Option<f64> {
        self.result().map(|r| r.log10_t())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub axis: SweepAxis,
    pub template: SystemParams,
    pub points: Vec<SweepPoint>,
}

fn check_monotone(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid("range", "sweep range is empty"));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("range", "sweep values must be finite"));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "range",
            "sweep values must be strictly increasing",
        ));
    }
    Ok(())
}

fn run_sweep(axis: SweepAxis, template: &SystemParams, values: &[f64]) -> Result<SweepCurve> {
    check_monotone(values)?;
    template.validate()?;
    let shared = match axis {
        SweepAxis::N => None,
        _ => Some(SpinOperators::new(template.n)?),
    };
    let points = values
        .par_iter()
        .map(|&x| {
            let params = axis.apply(template, x);
            params.validate()?;
            let analysis = match &shared {
                Some(ops) => analyze_point(&params, ops)?,
                None => analyze_point(&params, &SpinOperators::new(params.n)?)?,
            };
            Ok(SweepPoint { param: x, analysis })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepCurve {
        axis,
        template: *template,
        points,
    })
}

/// Fixed `c_scaled`, so `c = c_scaled / (N + 1)` at every point.
pub fn sweep_over_n(c_scaled: f64, ns: &[usize], template: &SystemParams) -> Result<SweepCurve> {
    let first = *ns
        .first()
        .ok_or_else(|| Error::invalid("n_range", "sweep range is empty"))?;
    if first < 1 {
        return Err(Error::invalid("n_range", "particle numbers must be >= 1"));
    }
    let values: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    run_sweep(
        SweepAxis::N,
        &template.with_n(first).at_c_scaled(c_scaled),
        &values,
    )
}

pub fn sweep_over_c(n: usize, c_scaled: &[f64], template: &SystemParams) -> Result<SweepCurve> {
    run_sweep(SweepAxis::CScaled, &template.with_n(n), c_scaled)
}

pub fn sweep_over_v(v: &[f64], template: &SystemParams) -> Result<SweepCurve> {
    run_sweep(SweepAxis::V, template, v)
}

impl SweepCurve {
    pub fn params(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.param).collect()
    }

    pub fn gap_flags(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.is_gap()).collect()
    }

    pub fn point_at(&self, param: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.param == param)
    }

    pub fn evaluate(&self, value: f64) -> Result<PointAnalysis> {
        let params = self.axis.apply(&self.template, value);
        analyze_point(&params, &SpinOperators::new(params.n)?)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "param,eps_plus,eps_minus,delta_eps,T_tunnel,overlap_sum,valid,third_overlap,T_c"
        )?;
        for p in &self.points {
            let param = match self.axis {
                SweepAxis::N => format!("{}", p.param as usize),
                _ => fmt_f(p.param),
            };
            match p.result() {
                Some(r) => {
                    let (t_o, t_c) = r
                        .third_level
                        .map(|t| (t.overlap, t.t_c))
                        .unwrap_or((f64::NAN, f64::NAN));
                    writeln!(
                        w,
                        "{param},{},{},{},{},{},{},{},{}",
                        fmt_f(r.eps_plus),
                        fmt_f(r.eps_minus),
                        fmt_f(r.delta_eps),
                        fmt_f(r.t_tunnel),
                        fmt_f(r.overlap_sum()),
                        p.analysis.validity.as_str(),
                        fmt_f(t_o),
                        fmt_f(t_c)
                    )?;
                }
                None => writeln!(w, "{param},nan,nan,nan,nan,nan,no_island,nan,nan")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "CDT")]
    Cdt,
    #[serde(rename = "CAT")]
    Cat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub param: f64,
    /// CDT: final bisection bracket. CAT: full width of the dip at half depth.
    pub width: f64,
    /// Doublet splitting at the event.
    pub delta_eps: f64,
    /// CAT: depth of the dip in decades below the local trend.
    pub depth: f64,
    /// Smallest same-parity level distance seen at the event.
    pub same_parity_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingOptions {
    /// Bisection stops when the bracket is below `rel_tol * |param|`.
    pub rel_tol: f64,
    /// A sign change is a crossing only if `|s|` has shrunk below this
    /// fraction of the coarse-grid value by the end of the bisection.
    pub zero_fraction: f64,
    /// Minimal CAT dip below the log-linear trend, decades.
    pub min_depth: f64,
    /// Half-width of the trend window; defaults to 3 for N sweeps, 0.1 otherwise.
    pub trend_half_width: Option<f64>,
    /// Golden-section evaluations when refining a dip.
    pub refine_evals: usize,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        CrossingOptions {
            rel_tol: 1e-6,
            zero_fraction: 1e-2,
            min_depth: 0.5,
            trend_half_width: None,
            refine_evals: 30,
        }
    }
}

/// Coarse scan step for c-sweeps used by the event search.
pub const DEFAULT_C_STEP: f64 = 0.005;

/// CDT crossings (sign changes of the signed doublet splitting, bisected) and
/// CAT dips (local minima of `T` below the local exponential trend, refined).
pub fn detect_crossings(curve: &SweepCurve, opts: &CrossingOptions) -> Result<Vec<CrossingEvent>> {
    let mut events = Vec::new();
    if curve.axis != SweepAxis::N {
        events.extend(find_cdt(curve, opts)?);
    }
    events.extend(find_cat(curve, opts)?);
    events.sort_by(|a, b| a.param.total_cmp(&b.param));
    Ok(events)
}

fn find_cdt(curve: &SweepCurve, opts: &CrossingOptions) -> Result<Vec<CrossingEvent>> {
    let tau = curve.template.tau;
    let quarter = PI / (2.0 * tau);
    let mut out = Vec::new();
    for w in curve.points.windows(2) {
        let (Some(ra), Some(rb)) = (w[0].result(), w[1].result()) else {
            continue;
        };
        let (sa, sb) = (ra.signed_splitting(), rb.signed_splitting());
        if sa.abs() > quarter || sb.abs() > quarter || sa * sb > 0.0 {
            continue;
        }
        let scale = sa.abs().max(sb.abs());
        let (mut lo, mut hi) = (w[0].param, w[1].param);
        let (mut s_lo, mut s_hi) = (sa, sb);
        let mut gap = ra.same_parity_gap.min(rb.same_parity_gap);
        let mut broken = false;
        while hi - lo > opts.rel_tol * lo.abs().max(hi.abs()) && s_lo != 0.0 && s_hi != 0.0 {
            let mid = 0.5 * (lo + hi);
            let Some(r) = curve.evaluate(mid)?.result else {
                broken = true;
                break;
            };
            let s = r.signed_splitting();
            gap = gap.min(r.same_parity_gap);
            if s.abs() > quarter {
                broken = true;
                break;
            }
            if s * s_lo > 0.0 {
                lo = mid;
                s_lo = s;
            } else {
                hi = mid;
                s_hi = s;
            }
        }
        if broken || s_lo.abs().min(s_hi.abs()) > opts.zero_fraction * scale {
            continue;
        }
        let param = if s_lo == s_hi {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * s_lo / (s_lo - s_hi)
        };
        out.push(CrossingEvent {
            kind: EventKind::Cdt,
            param,
            width: hi - lo,
            delta_eps: s_lo.abs().min(s_hi.abs()),
            depth: f64::INFINITY,
            same_parity_gap: gap,
        });
    }
    Ok(out)
}

/// Log-linear trend through the nearest finite points at `p -+ half_width`.
fn trend_at(xs: &[f64], ys: &[Option<f64>], i: usize, half: f64) -> Option<f64> {
    let p = xs[i];
    let left = (0..i)
        .rev()
        .filter(|&j| ys[j].is_some_and(f64::is_finite))
        .find(|&j| p - xs[j] >= half - 1e-12)?;
    let right = (i + 1..xs.len())
        .filter(|&j| ys[j].is_some_and(f64::is_finite))
        .find(|&j| xs[j] - p >= half - 1e-12)?;
    let (yl, yr) = (ys[left]?, ys[right]?);
    Some(yl + (yr - yl) * (p - xs[left]) / (xs[right] - xs[left]))
}

fn find_cat(curve: &SweepCurve, opts: &CrossingOptions) -> Result<Vec<CrossingEvent>> {
    let xs = curve.params();
    let ys: Vec<Option<f64>> = curve.points.iter().map(|p| p.log10_t()).collect();
    let half = opts.trend_half_width.unwrap_or(match curve.axis {
        SweepAxis::N => 3.0,
        _ => 0.1,
    });
    let finite = |j: usize| ys[j].filter(|y| y.is_finite());
    let mut out = Vec::new();
    for i in 1..xs.len().saturating_sub(1) {
        let (Some(y), Some(yl), Some(yr)) = (finite(i), finite(i - 1), finite(i + 1)) else {
            continue;
        };
        if !(y < yl && y < yr) {
            continue;
        }
        let Some(trend) = trend_at(&xs, &ys, i, half) else {
            continue;
        };
        let r = curve.points[i].result().expect("finite T has a result");
        let (mut x_min, mut y_min, mut delta, mut gap) = (xs[i], y, r.delta_eps, r.same_parity_gap);
        if curve.axis != SweepAxis::N {
            let refined = refine_dip(curve, xs[i - 1], xs[i + 1], opts.refine_evals)?;
            if let Some((x, r)) = refined {
                if r.log10_t() < y_min {
                    x_min = x;
                    y_min = r.log10_t();
                    delta = r.delta_eps;
                }
                gap = gap.min(r.same_parity_gap);
            }
        }
        let depth = trend - y_min;
        if depth < opts.min_depth {
            continue;
        }
        let level = y_min + 0.5 * depth;
        let cross = |j: usize, k: usize| -> f64 {
            match (finite(j), finite(k)) {
                (Some(a), Some(b)) if a != b => xs[j] + (xs[k] - xs[j]) * (level - a) / (b - a),
                _ => xs[j],
            }
        };
        let mut l = i;
        while l > 0 && finite(l - 1).is_some_and(|v| v < level) {
            l -= 1;
        }
        let mut rgt = i;
        while rgt + 1 < xs.len() && finite(rgt + 1).is_some_and(|v| v < level) {
            rgt += 1;
        }
        let x_left = if l > 0 { cross(l - 1, l) } else { xs[0] };
        let x_right = if rgt + 1 < xs.len() {
            cross(rgt, rgt + 1)
        } else {
            xs[rgt]
        };
        out.push(CrossingEvent {
            kind: EventKind::Cat,
            param: x_min,
            width: (x_right - x_left).max(0.0),
            delta_eps: delta,
            depth,
            same_parity_gap: gap,
        });
    }
    Ok(out)
}

/// Golden-section search for the smallest `T` inside `(a, b)`.
fn refine_dip(curve: &SweepCurve, a: f64, b: f64, evals: usize) -> Result<Option<(f64, TunnelingResult)>> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |x: f64| -> Result<Option<TunnelingResult>> { Ok(curve.evaluate(x)?.result) };
    let key = |r: &Option<TunnelingResult>| r.map_or(f64::INFINITY, |r| r.log10_t());
    let (mut a, mut b) = (a, b);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut r1 = eval(x1)?;
    let mut r2 = eval(x2)?;
    for _ in 0..evals.saturating_sub(2) {
        if key(&r1) < key(&r2) {
            b = x2;
            x2 = x1;
            r2 = r1;
            x1 = b - g * (b - a);
            r1 = eval(x1)?;
        } else {
            a = x1;
            x1 = x2;
            r1 = r2;
            x2 = a + g * (b - a);
            r2 = eval(x2)?;
        }
    }
    let best = if key(&r1) < key(&r2) { (x1, r1) } else { (x2, r2) };
    Ok(best.1.map(|r| (best.0, r)))
}

/// Uniform grid `min, min + step, ..` up to `max` (inclusive within half a step).
pub fn uniform_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 0.5).floor() as usize;
    (0..=n).map(|k| min + step * k as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::propagate;

    fn params(n: usize, cs: f64) -> SystemParams {
        SystemParams::with_c_scaled(n, cs, 1.0, 1.0).unwrap()
    }

    fn doublet(
        n: usize,
        cs: f64,
    ) -> (
        SystemParams,
        SpinOperators,
        IslandStates,
        FloquetDecomposition,
        TunnelingResult,
    ) {
        let p = params(n, cs);
        let ops = SpinOperators::new(n).unwrap();
        let isl = island_states(&p).unwrap();
        let d = diagonalize_floquet(&FloquetOperator::new(&p, &ops).unwrap(), &ops).unwrap();
        let r = identify_doublet(&d, &isl.minus).unwrap();
        (p, ops, isl, d, r)
    }

    #[test]
    fn no_islands_below_bifurcation() {
        assert!(matches!(
            island_states(&params(20, 0.5)),
            Err(Error::NoIslands(_))
        ));
    }

    #[test]
    fn island_states_are_parity_images() {
        let p = params(20, 2.0);
        let ops = SpinOperators::new(20).unwrap();
        let isl = island_states(&p).unwrap();
        let lp = crate::spin::angular_expectation(&isl.plus, &ops).unwrap();
        let lm = crate::spin::angular_expectation(&isl.minus, &ops).unwrap();
        assert!(lp[2] / 10.0 > 0.6 && lm[2] / 10.0 < -0.6);
        let img = isl.minus.apply(&ops.rx);
        assert!(img.overlap(&isl.plus).norm() > 1.0 - 1e-8);
        // most of the condensate sits in well 2
        assert!((10.0 - lm[2]) / 20.0 > 0.8);
    }

    #[test]
    fn doublet_clean_regime() {
        let (_, _, isl, d, r) = doublet(20, 2.0);
        assert!(r.two_state_valid);
        assert!((r.overlap_sum() - 0.94).abs() < 0.02, "{}", r.overlap_sum());
        assert_eq!(d.parities[r.doublet_indices.0], Parity::Even);
        assert_eq!(d.parities[r.doublet_indices.1], Parity::Odd);
        assert!(r.delta_eps >= 0.0 && r.delta_eps <= PI);
        assert!((r.t_tunnel - 2.0 * PI / r.delta_eps).abs() < 1e-9 * r.t_tunnel);
        let (pp, pm) = reconstruct_islands(&d, &r, &isl.minus);
        assert!(pp.overlap(&pm).norm() < 1e-12);
        assert!((pm.norm() - 1.0).abs() < 1e-12);
        let q = pm.fidelity(&isl.minus);
        assert!((q - r.reconstruction_quality).abs() < 1e-12);
        assert!(q >= 0.9);
        let ops = SpinOperators::new(20).unwrap();
        assert!(pm.apply(&ops.rx).overlap(&pp).norm() > 1.0 - 1e-8);
    }

    #[test]
    fn third_level_at_resonance() {
        let (_, _, _, _, r) = doublet(33, 2.0);
        let t = r.third_level.unwrap();
        assert!((t.overlap - 0.06).abs() < 0.03, "{}", t.overlap);
        assert!((t.t_c - 551.0).abs() < 55.0, "{}", t.t_c);
        assert!((2000.0..8000.0).contains(&r.t_tunnel), "{}", r.t_tunnel);
    }

    #[test]
    fn asymmetric_trap_falls_back_to_overlap_ranking() {
        let p = SystemParams::new(1e-3, 1.0, 2.0 / 21.0, 1.0, 20).unwrap();
        let ops = SpinOperators::new(20).unwrap();
        let minus = island_states(&params(20, 2.0)).unwrap().minus;
        let d = diagonalize_floquet(&FloquetOperator::new(&p, &ops).unwrap(), &ops).unwrap();
        let r = identify_doublet(&d, &minus).unwrap();
        let pops = d.populations(&minus);
        let mut sorted = pops.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(pops[r.doublet_indices.0], sorted[0]);
        assert_eq!(pops[r.doublet_indices.1], sorted[1]);
    }

    #[test]
    fn two_level_endpoints() {
        let (_, ops, isl, _, r) = doublet(20, 2.0);
        let m = TwoLevelModel::new(&r, &ops, &isl.minus, &isl.plus);
        let at0 = m.at_phase(0.0);
        let atpi = m.at_phase(PI);
        for k in 0..3 {
            assert!((at0[k] - m.l_minus[k]).abs() < 1e-12);
            assert!((atpi[k] - m.l_plus[k]).abs() < 1e-9);
        }
        assert_eq!(two_level_prediction(&r, &ops, &isl.minus, &isl.plus, 0), at0);
        // islands are parity images, so the model line is nearly straight
        assert!(m.im_l_mp_norm() < 1e-3 * ops.ell());
    }

    #[test]
    fn two_level_matches_exact_two_state_evolution() {
        let (_, ops, _, d, r) = doublet(16, 2.0);
        let minus = d.states[r.doublet_indices.0].clone();
        let (pp, pm) = reconstruct_islands(&d, &r, &minus);
        let m = TwoLevelModel::new(&r, &ops, &pm, &pp);
        let f = FloquetOperator::new(&params(16, 2.0), &ops).unwrap();
        let run = propagate(&pm, &f, &ops, 40, &Observers::default()).unwrap();
        for s in &run {
            let want = m.at(s.kick as u64);
            for (k, w) in want.iter().enumerate() {
                assert!((s.l[k] * ops.ell() - w).abs() < 1e-8, "{} {}", s.kick, k);
            }
        }
    }

    #[test]
    fn two_level_tracks_propagation() {
        let (p, ops, isl, _, r) = doublet(20, 2.0);
        let m = TwoLevelModel::new(&r, &ops, &isl.minus, &isl.plus);
        let f = FloquetOperator::new(&p, &ops).unwrap();
        let run = propagate(&isl.minus, &f, &ops, 2000, &Observers::default()).unwrap();
        let ell = ops.ell();
        let mut sq = [0.0; 3];
        let mut worst: f64 = 0.0;
        for s in &run {
            let want = m.at(s.kick as u64);
            for k in 0..3 {
                let d = s.l[k] - want[k] / ell;
                sq[k] += d * d;
                worst = worst.max(d.abs());
            }
        }
        // the ~6% non-doublet weight shifts <L_x> and winds a tube around the line
        let rms = sq.map(|v| (v / run.len() as f64).sqrt());
        assert!(rms[1] < 0.1 && rms[2] < 0.1, "{rms:?}");
        assert!(rms[0] < 0.11, "{rms:?}");
        assert!(worst < 0.2, "{worst}");
    }

    #[test]
    fn propagation_period_small_n() {
        let (p, _, _, _, r) = doublet(10, 2.0);
        let t = tunneling_period_from_propagation(&p, 10_000).unwrap();
        let period = t.period().unwrap();
        assert!(
            (period - r.t_tunnel).abs() / r.t_tunnel < 0.1,
            "{period} vs {}",
            r.t_tunnel
        );
    }

    #[test]
    fn propagation_censored_deep_in_self_trapping() {
        let t = tunneling_period_from_propagation(&params(30, 2.0), 10_000).unwrap();
        assert_eq!(t, PropagationPeriod::Censored { horizon: 10_000 });
    }

    #[test]
    fn sweep_rejects_bad_ranges() {
        let p = params(10, 2.0);
        assert!(sweep_over_c(10, &[], &p).is_err());
        assert!(sweep_over_c(10, &[2.0, 1.9], &p).is_err());
        assert!(sweep_over_n(2.0, &[], &p).is_err());
    }

    #[test]
    fn sweep_flags_and_csv() {
        let p = params(12, 2.0);
        let cs = [0.5, 1.5, 2.0, 2.5];
        let curve = sweep_over_c(12, &cs, &p).unwrap();
        assert_eq!(curve.points[0].analysis.validity, Validity::NoIsland);
        for (pt, gap) in curve.points.iter().zip(curve.gap_flags()) {
            assert_eq!(gap, pt.result().is_none_or(|r| !r.two_state_valid));
        }
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().contains("no_island"));
        // bit-exact reproduction of a single point
        let again = analyze_point(&p.at_c_scaled(2.0), &SpinOperators::new(12).unwrap()).unwrap();
        assert_eq!(again, curve.points[2].analysis);
    }

    #[test]
    fn sweep_over_n_uses_scaled_c() {
        let p = params(5, 2.0);
        let curve = sweep_over_n(2.0, &[6, 8], &p).unwrap();
        assert_eq!(curve.points[1].analysis.params.n, 8);
        assert!((curve.points[1].analysis.params.c - 2.0 / 9.0).abs() < 1e-16);
    }

    #[test]
    fn cdt_located_by_bisection() {
        let p = params(30, 2.0);
        let curve = sweep_over_c(30, &uniform_grid(1.95, 2.01, 0.01), &p).unwrap();
        let ev = detect_crossings(&curve, &CrossingOptions::default()).unwrap();
        let cdt: Vec<_> = ev.iter().filter(|e| e.kind == EventKind::Cdt).collect();
        assert_eq!(cdt.len(), 1, "{ev:?}");
        assert!((cdt[0].param - 1.98).abs() < 0.02);
        assert!(cdt[0].width <= 1e-6 * cdt[0].param * 1.0001);
        assert!(cdt[0].same_parity_gap > 1e-10);
    }

    #[test]
    fn uniform_grid_endpoints() {
        let g = uniform_grid(1.0, 2.0, 0.25);
        assert_eq!(g, vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        assert_eq!(uniform_grid(0.0, 0.0, 0.1), vec![0.0]);
    }

    #[test]
    fn event_json_shape() {
        let e = CrossingEvent {
            kind: EventKind::Cat,
            param: 2.35,
            width: 0.01,
            delta_eps: 1e-3,
            depth: 1.2,
            same_parity_gap: 0.01,
        };
        let v: serde_json::Value = serde_json::to_value(e).unwrap();
        assert_eq!(v["type"], "CAT");
        assert_eq!(v["param"], 2.35);
    }
}
