//! Trajectory-dataset ingestion: delimited-text parsing, Savitzky–Golay
//! position smoothing, velocity recomputation by differentiation, lane
//! reassignment from lateral positions, and construction of replay merge
//! scenarios in which surrounding vehicles follow their recorded motion.
//!
//! The pipeline is deterministic: parsing groups vehicles in ascending-id
//! order, per-track processing is order-preserving (and parallel), and the
//! scenario builder is a pure function of the processed tracks and the
//! query.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{least_squares, LinalgError, Matrix};
use crate::scalar::{real, Scalar};
use crate::sim::{ReplayScenario, ReplayTrack};

/// One international foot in meters (the survey datasets record feet).
pub const FOOT_IN_METERS: f64 = 0.3048;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    /// The text had data rows but none matched the column map.
    #[error("{rows} data rows, none parseable under the configured column map")]
    NoParsableRows { rows: usize },
    #[error("smoothing window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("polynomial order {order} must be smaller than the window {window}")]
    OrderTooHigh { order: usize, window: usize },
    /// Exclusion signal: the series is shorter than the smoothing window.
    #[error("series of length {len} is shorter than the smoothing window {window}")]
    TooShort { len: usize, window: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("polynomial fit failed: {0}")]
    Fit(#[from] LinalgError),
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// 0-based column indices into each delimited row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub vehicle_id: usize,
    pub frame: usize,
    /// Longitudinal position column.
    pub local_x: usize,
    /// Lateral position column.
    pub local_y: usize,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap { vehicle_id: 0, frame: 1, local_x: 2, local_y: 3 }
    }
}

/// Row bookkeeping from one parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseStats {
    /// Non-empty, non-comment lines seen.
    pub rows_total: usize,
    /// Rows skipped because a mapped column was missing or non-numeric
    /// (headers are counted here too).
    pub rows_skipped: usize,
    /// Samples dropped because the vehicle already had that frame (first
    /// occurrence wins).
    pub duplicate_frames: usize,
}

/// One vehicle's raw samples, frame-sorted and de-duplicated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrack<T> {
    pub id: u64,
    /// Strictly increasing frame indices.
    pub frames: Vec<u64>,
    /// Longitudinal positions [m].
    pub x: Vec<T>,
    /// Lateral positions [m].
    pub y: Vec<T>,
    pub frame_rate_hz: T,
}

impl<T: Scalar> RawTrack<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Sampling interval [s].
    pub fn dt(&self) -> T {
        T::one() / self.frame_rate_hz
    }
}

fn parse_u64(field: &str) -> Option<u64> {
    // Ids and frames are integers, but some exports format them as floats
    // ("12.0"); accept any non-negative integral numeric.
    if let Ok(v) = field.parse::<u64>() {
        return Some(v);
    }
    let f = field.parse::<f64>().ok()?;
    if f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 {
        Some(f as u64)
    } else {
        None
    }
}

/// Parses delimited trajectory text (comma-delimited when the line contains
/// a comma, whitespace-delimited otherwise). Malformed rows — including
/// headers — are counted and skipped; vehicles come out grouped in
/// ascending-id order with frame-sorted, de-duplicated samples. Positions
/// are multiplied by [`FOOT_IN_METERS`] when `feet` is set.
pub fn parse_trajectory_text<T: Scalar>(
    text: &str,
    map: &ColumnMap,
    frame_rate_hz: T,
    feet: bool,
) -> Result<(Vec<RawTrack<T>>, ParseStats), IngestError> {
    if !(frame_rate_hz.is_finite() && frame_rate_hz > T::zero()) {
        return Err(IngestError::InvalidInput("frame rate must be positive".into()));
    }
    let mut stats = ParseStats::default();
    let mut by_id: std::collections::BTreeMap<u64, Vec<(u64, f64, f64)>> =
        std::collections::BTreeMap::new();

    let needed = map.vehicle_id.max(map.frame).max(map.local_x).max(map.local_y);
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        stats.rows_total += 1;
        let fields: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() <= needed {
            stats.rows_skipped += 1;
            continue;
        }
        let parsed = (|| {
            let id = parse_u64(fields[map.vehicle_id])?;
            let frame = parse_u64(fields[map.frame])?;
            let x = fields[map.local_x].parse::<f64>().ok().filter(|v| v.is_finite())?;
            let y = fields[map.local_y].parse::<f64>().ok().filter(|v| v.is_finite())?;
            Some((id, frame, x, y))
        })();
        match parsed {
            Some((id, frame, mut x, mut y)) => {
                if feet {
                    x *= FOOT_IN_METERS;
                    y *= FOOT_IN_METERS;
                }
                by_id.entry(id).or_default().push((frame, x, y));
            }
            None => stats.rows_skipped += 1,
        }
    }

    if stats.rows_total > 0 && stats.rows_skipped == stats.rows_total {
        return Err(IngestError::NoParsableRows { rows: stats.rows_total });
    }

    let mut tracks = Vec::with_capacity(by_id.len());
    for (id, mut samples) in by_id {
        samples.sort_by_key(|s| s.0);
        let mut frames = Vec::with_capacity(samples.len());
        let mut xs = Vec::with_capacity(samples.len());
        let mut ys = Vec::with_capacity(samples.len());
        for (frame, x, y) in samples {
            if frames.last() == Some(&frame) {
                stats.duplicate_frames += 1;
                continue;
            }
            frames.push(frame);
            xs.push(real::<T>(x));
            ys.push(real::<T>(y));
        }
        tracks.push(RawTrack { id, frames, x: xs, y: ys, frame_rate_hz });
    }
    Ok((tracks, stats))
}

// ---------------------------------------------------------------------------
// Smoothing and differentiation
// ---------------------------------------------------------------------------

/// Savitzky–Golay smoothing: at every index, fit a degree-`order` polynomial
/// by least squares over a `window`-sized neighborhood (symmetric in the
/// interior; shifted inward at the edges so the fit stays full-rank) and
/// evaluate it at that index. Polynomials of degree ≤ `order` are reproduced
/// exactly. Samples are treated as uniformly spaced.
pub fn savitzky_golay<T: Scalar>(
    series: &[T],
    window: usize,
    order: usize,
) -> Result<Vec<T>, IngestError> {
    if window % 2 == 0 || window == 0 {
        return Err(IngestError::EvenWindow(window));
    }
    if order >= window {
        return Err(IngestError::OrderTooHigh { order, window });
    }
    let n = series.len();
    if n < window {
        return Err(IngestError::TooShort { len: n, window });
    }
    let half = window / 2;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        // Window start, clamped so the window always holds `window` points.
        let lo = t.saturating_sub(half).min(n - window);
        let mut design = Matrix::zeros(window, order + 1);
        let mut values = Vec::with_capacity(window);
        for (r, j) in (lo..lo + window).enumerate() {
            let dj = real::<T>(j as f64 - t as f64);
            let mut p = T::one();
            for c in 0..=order {
                *design.at_mut(r, c) = p;
                p = p * dj;
            }
            values.push(series[j]);
        }
        let coeffs = least_squares(&design, &values)?;
        out.push(coeffs[0]);
    }
    Ok(out)
}

/// Velocities from positions: central differences in the interior, one-sided
/// at the two ends; output length equals input length.
pub fn differentiate<T: Scalar>(positions: &[T], dt: T) -> Result<Vec<T>, IngestError> {
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(IngestError::InvalidInput("dt must be positive".into()));
    }
    let n = positions.len();
    if n < 2 {
        return Err(IngestError::InvalidInput("need at least two positions".into()));
    }
    let two = real::<T>(2.0);
    let mut v = Vec::with_capacity(n);
    v.push((positions[1] - positions[0]) / dt);
    for i in 1..n - 1 {
        v.push((positions[i + 1] - positions[i - 1]) / (two * dt));
    }
    v.push((positions[n - 1] - positions[n - 2]) / dt);
    Ok(v)
}

/// Lane index per lateral position given strictly increasing boundaries
/// (`k+1` boundaries delimit `k` lanes). A position exactly on a boundary
/// belongs to the lower-index lane; positions outside every lane map to
/// `None` (off-road).
pub fn reassign_lanes<T: Scalar>(
    ys: &[T],
    boundaries: &[T],
) -> Result<Vec<Option<usize>>, IngestError> {
    if boundaries.len() < 2 {
        return Err(IngestError::InvalidInput("need at least two lane boundaries".into()));
    }
    if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(IngestError::InvalidInput("lane boundaries must be strictly increasing".into()));
    }
    Ok(ys
        .iter()
        .map(|&y| {
            boundaries
                .windows(2)
                .position(|b| b[0] <= y && y <= b[1])
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Track processing
// ---------------------------------------------------------------------------

/// A processed track: smoothed positions, recomputed speeds, per-frame lane
/// assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTrack<T> {
    pub id: u64,
    pub frames: Vec<u64>,
    /// Smoothed longitudinal positions [m].
    pub x: Vec<T>,
    /// Smoothed lateral positions [m].
    pub y: Vec<T>,
    /// Longitudinal speeds recomputed from the smoothed positions [m/s].
    pub v: Vec<T>,
    /// Lane index per frame (`None` = off-road).
    pub lanes: Vec<Option<usize>>,
    pub frame_rate_hz: T,
}

impl<T: Scalar> SmoothTrack<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dt(&self) -> T {
        T::one() / self.frame_rate_hz
    }
}

/// Smooths every track, recomputes speeds, and reassigns lanes. Tracks
/// shorter than the window are excluded (second return value counts them);
/// everything else fails loudly.
pub fn process_tracks<T: Scalar>(
    raws: &[RawTrack<T>],
    window: usize,
    order: usize,
    lane_boundaries: &[T],
) -> Result<(Vec<SmoothTrack<T>>, usize), IngestError> {
    let processed: Result<Vec<Option<SmoothTrack<T>>>, IngestError> = raws
        .par_iter()
        .map(|raw| {
            let x = match savitzky_golay(&raw.x, window, order) {
                Ok(x) => x,
                Err(IngestError::TooShort { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let y = savitzky_golay(&raw.y, window, order)?;
            let v = differentiate(&x, raw.dt())?;
            let lanes = reassign_lanes(&y, lane_boundaries)?;
            Ok(Some(SmoothTrack {
                id: raw.id,
                frames: raw.frames.clone(),
                x,
                y,
                v,
                lanes,
                frame_rate_hz: raw.frame_rate_hz,
            }))
        })
        .collect();
    let processed = processed?;
    let excluded = processed.iter().filter(|t| t.is_none()).count();
    Ok((processed.into_iter().flatten().collect(), excluded))
}

// ---------------------------------------------------------------------------
// Replay-scenario construction
// ---------------------------------------------------------------------------

/// Which recorded situations become replay scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayQuery {
    /// Lane index of the on-ramp: every track starting in this lane seeds
    /// one scenario.
    pub ramp_lane: usize,
    /// Lane index of the merge target lane.
    pub target_lane: usize,
    /// Maximum surrounding vehicles ahead of the ego at scenario start.
    pub n_leaders: usize,
    /// Maximum surrounding vehicles behind the ego at scenario start.
    pub n_followers: usize,
}

impl Default for ReplayQuery {
    fn default() -> Self {
        ReplayQuery { ramp_lane: 0, target_lane: 1, n_leaders: 4, n_followers: 4 }
    }
}

/// A recorded on-ramp vehicle that produced no scenario, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedScenario {
    pub ego_id: u64,
    pub reason: String,
}

/// Output of [`build_replay_scenarios`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuild<T> {
    pub scenarios: Vec<ReplayScenario<T>>,
    /// Recorded vehicle id behind each scenario's ego, parallel to
    /// `scenarios`.
    pub ego_ids: Vec<u64>,
    pub skipped: Vec<SkippedScenario>,
}

/// Seeds one scenario per recorded on-ramp vehicle (a track whose first
/// frame lies in `query.ramp_lane`): the ego starts from that vehicle's
/// first processed sample; the surrounding vehicles are the nearest
/// `n_leaders` tracks ahead and `n_followers` behind among target-lane
/// tracks that have a sample at the ego's start frame, each replayed from
/// that frame for as long as its frames stay contiguous. On-ramp vehicles
/// with no target-lane neighbor are skipped with a reason.
pub fn build_replay_scenarios<T: Scalar>(
    tracks: &[SmoothTrack<T>],
    query: &ReplayQuery,
) -> Result<ReplayBuild<T>, IngestError> {
    if query.ramp_lane == query.target_lane {
        return Err(IngestError::InvalidInput("ramp and target lane must differ".into()));
    }
    let mut build = ReplayBuild { scenarios: Vec::new(), ego_ids: Vec::new(), skipped: Vec::new() };

    for ego in tracks {
        if ego.is_empty() || ego.lanes[0] != Some(query.ramp_lane) {
            continue;
        }
        let t0 = ego.frames[0];
        let ego_x0 = ego.x[0];

        // Target-lane tracks with a sample at the ego's start frame, keyed
        // by their position at that frame.
        let mut ahead: Vec<(T, &SmoothTrack<T>, usize)> = Vec::new();
        let mut behind: Vec<(T, &SmoothTrack<T>, usize)> = Vec::new();
        for other in tracks {
            if other.id == ego.id {
                continue;
            }
            let Ok(idx) = other.frames.binary_search(&t0) else {
                continue;
            };
            if other.lanes[idx] != Some(query.target_lane) {
                continue;
            }
            let pos = other.x[idx];
            if pos >= ego_x0 {
                ahead.push((pos, other, idx));
            } else {
                behind.push((pos, other, idx));
            }
        }
        if ahead.is_empty() && behind.is_empty() {
            build.skipped.push(SkippedScenario {
                ego_id: ego.id,
                reason: "no target-lane vehicle present at the scenario start".into(),
            });
            continue;
        }
        // Nearest first; ties broken by vehicle id for determinism.
        ahead.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.id.cmp(&b.1.id)));
        behind.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.id.cmp(&b.1.id)));
        ahead.truncate(query.n_leaders);
        behind.truncate(query.n_followers);

        let slice_track = |track: &SmoothTrack<T>, start: usize| {
            let mut end = start + 1;
            while end < track.len() && track.frames[end] == track.frames[end - 1] + 1 {
                end += 1;
            }
            ReplayTrack { x: track.x[start..end].to_vec(), v: track.v[start..end].to_vec() }
        };
        let replay_tracks: Vec<ReplayTrack<T>> = ahead
            .iter()
            .chain(behind.iter())
            .map(|(_, track, idx)| slice_track(track, *idx))
            .collect();

        build.scenarios.push(ReplayScenario {
            ego_x0,
            ego_v0: ego.v[0],
            dt: ego.dt(),
            tracks: replay_tracks,
        });
        build.ego_ids.push(ego.id);
    }
    Ok(build)
}
