//! Adaptive Dormand–Prince integration of `dx/dt = v(e, x, t)` along one
//! edge, with endpoint crossing located by bisection on the step size.

use crate::currents::FlowField;
use crate::error::{Error, Result};
use crate::graph::{EdgeId, End};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Relative to the record length; the event tolerance is
    /// `event_tol · (t_end - t0)`.
    pub event_tol: f64,
    pub min_step: f64,
    /// Upper bound on a step, as a multiple of the snapshot spacing.
    pub max_step_snapshots: f64,
    /// Keep every accepted `(t, x)` in the segment.
    pub dense: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-8,
            atol: 1e-10,
            event_tol: 1e-10,
            min_step: 1e-14,
            max_step_snapshots: 1.0,
            dense: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub edge: EdgeId,
    pub entry_time: f64,
    pub exit_time: f64,
    /// Accepted steps; always contains the entry and exit points.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arrival {
    /// Reached the vertex at `end` of the edge.
    Vertex { end: End, t: f64 },
    /// Ran to `t_final` at position `x`.
    Final { t: f64, x: f64 },
}

/// One integration on `edge` from `(x0, t0)` until an endpoint or `t_final`.
/// `stops` are times (sorted) at which the position is reported through
/// `on_stop`; steps are clipped to land on them exactly.
pub fn integrate_edge(
    field: &FlowField,
    edge: EdgeId,
    x0: f64,
    t0: f64,
    t_final: f64,
    opts: &IntegratorOptions,
    stops: &[f64],
    mut on_stop: impl FnMut(f64, f64),
) -> Result<(Segment, Arrival)> {
    let length = field.length(edge);
    let event_tol = opts.event_tol * (field.t_end() - field.t0()).max(f64::MIN_POSITIVE);
    let max_step = opts.max_step_snapshots * field.spacing();
    let v = |x: f64, t: f64| field.velocity(edge, x, t);

    let mut t = t0;
    let mut x = x0;
    let mut samples = vec![(t, x)];
    let mut next_stop = stops.partition_point(|&s| s < t0);
    while next_stop < stops.len() && stops[next_stop] <= t0 {
        on_stop(stops[next_stop], x);
        next_stop += 1;
    }

    let mut k1 = v(x, t)?;
    let mut dt = initial_step(k1, length, field.intervals(edge), max_step, t_final - t);

    loop {
        if t >= t_final {
            while next_stop < stops.len() && stops[next_stop] <= t_final {
                on_stop(stops[next_stop], x);
                next_stop += 1;
            }
            return Ok(finish(edge, t0, samples, Arrival::Final { t, x }));
        }
        let mut target = t_final;
        let mut at_stop = false;
        if next_stop < stops.len() && stops[next_stop] < target {
            target = stops[next_stop];
            at_stop = true;
        }
        let mut h = dt.min(target - t);
        let clipped = h >= target - t;
        if clipped {
            h = target - t;
        }

        let (x5, err, k7) = dp_step(&v, x, t, h, k1)?;
        let scale = opts.atol + opts.rtol * x.abs().max(x5.abs());
        let ratio = err / scale;
        if ratio > 1.0 {
            let shrink = (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.5);
            dt = h * shrink;
            if dt < opts.min_step {
                return Err(Error::StepUnderflow(t));
            }
            continue;
        }

        if x5 < 0.0 || x5 > length {
            let end = if x5 < 0.0 { End::From } else { End::To };
            let boundary = if x5 < 0.0 { 0.0 } else { length };
            let ta = t + bisect_crossing(&v, x, t, h, k1, boundary, event_tol)?;
            samples.push((ta, boundary));
            return Ok(finish(edge, t0, samples, Arrival::Vertex { end, t: ta }));
        }

        t = if clipped { target } else { t + h };
        x = x5;
        k1 = k7;
        if opts.dense {
            samples.push((t, x));
        }
        if clipped && at_stop {
            on_stop(t, x);
            next_stop += 1;
        }
        let grow = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        dt = (h * grow).min(max_step).max(opts.min_step);
    }
}

fn finish(edge: EdgeId, t0: f64, mut samples: Vec<(f64, f64)>, arrival: Arrival) -> (Segment, Arrival) {
    let (t, x) = match arrival {
        Arrival::Vertex { t, .. } => (t, *samples.last().map(|s| &s.1).unwrap_or(&0.0)),
        Arrival::Final { t, x } => (t, x),
    };
    if samples.last().map(|s| s.0) != Some(t) {
        samples.push((t, x));
    }
    (
        Segment {
            edge,
            entry_time: t0,
            exit_time: t,
            samples,
        },
        arrival,
    )
}

fn initial_step(v0: f64, length: f64, intervals: usize, max_step: f64, remaining: f64) -> f64 {
    let cell = length / intervals as f64;
    let by_speed = if v0.abs() > 0.0 { 0.25 * cell / v0.abs() } else { max_step };
    by_speed.min(max_step).min(remaining.max(0.0)).max(1e-12)
}

// Dormand–Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One step; returns the 5th-order value, the error estimate and the
/// derivative at the new point (first stage of the next step).
fn dp_step(v: &impl Fn(f64, f64) -> Result<f64>, x: f64, t: f64, h: f64, k1: f64) -> Result<(f64, f64, f64)> {
    let k2 = v(x + h * A21 * k1, t + h / 5.0)?;
    let k3 = v(x + h * (A31 * k1 + A32 * k2), t + 0.3 * h)?;
    let k4 = v(x + h * (A41 * k1 + A42 * k2 + A43 * k3), t + 0.8 * h)?;
    let k5 = v(x + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), t + 8.0 / 9.0 * h)?;
    let k6 = v(x + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5), t + h)?;
    let x5 = x + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
    let k7 = v(x5, t + h)?;
    let err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
    Ok((x5, err.abs(), k7))
}

/// Smallest step size, to within `tol`, at which the step reaches `boundary`.
fn bisect_crossing(
    v: &impl Fn(f64, f64) -> Result<f64>,
    x: f64,
    t: f64,
    h: f64,
    k1: f64,
    boundary: f64,
    tol: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, h);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        // the velocity field is clamped outside the edge, so stages stay defined
        let (y, _, _) = dp_step(v, x, t, mid, k1)?;
        if (y - boundary) * (x - boundary) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{chain, VertexCondition};
    use crate::grid::Grid;
    use crate::propagator::{EvolutionRecord, Interpolation, WaveState};
    use num_complex::Complex64;

    fn static_field(f: impl Fn(f64) -> Complex64, h: f64, snapshots: usize) -> FlowField {
        let g = chain(&[1.0], VertexCondition::default(), VertexCondition::default()).unwrap();
        let grid = Grid::build(&g, h).unwrap();
        let states = (0..snapshots)
            .map(|k| {
                let mut s = WaveState::from_fn(&g, &grid, 0.0, |_, x| f(x));
                s.t = k as f64 * 0.01;
                s
            })
            .collect();
        let rec = EvolutionRecord {
            states,
            spacing: 0.01,
            interpolation: Interpolation::Linear,
            outputs: vec![],
        };
        FlowField::new(&g, &grid, &rec, 1.0)
    }

    #[test]
    fn constant_velocity_arrival_time() {
        // e^{ikx}: uniform density
        let k = 3.0;
        let h = 0.01;
        let field = static_field(|x| Complex64::new(0.0, k * x).exp(), h, 101);
        // uniform c inside; the last cell ramps linearly to the stencil value
        let c = (k * h).sin() / h;
        let c_end = (4.0 * (k * h).sin() - (2.0 * k * h).sin()) / (2.0 * h);
        let (seg, arr) = integrate_edge(&field, EdgeId(0), 0.2, 0.0, 1.0, &IntegratorOptions::default(), &[], |_, _| {})
            .unwrap();
        match arr {
            Arrival::Vertex { end, t } => {
                assert_eq!(end, End::To);
                let exact = (0.8 - h) / c + h * (c_end / c).ln() / (c_end - c);
                assert!(((t - exact) / exact).abs() < 1e-6, "{t} {exact}");
                assert_eq!(seg.exit_time, t);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn real_state_stays_put() {
        let field = static_field(|x| Complex64::new(1.0 + x, 0.0), 0.01, 11);
        let (_, arr) = integrate_edge(&field, EdgeId(0), 0.4, 0.0, 0.1, &IntegratorOptions::default(), &[], |_, _| {})
            .unwrap();
        assert_eq!(arr, Arrival::Final { t: 0.1, x: 0.4 });
    }

    #[test]
    fn stops_are_hit_exactly() {
        let field = static_field(|x| Complex64::new(0.0, 0.5 * x).exp(), 0.01, 101);
        let stops = [0.0, 0.25, 0.5];
        let mut seen = Vec::new();
        integrate_edge(&field, EdgeId(0), 0.1, 0.0, 0.6, &IntegratorOptions::default(), &stops, |t, x| {
            seen.push((t, x))
        })
        .unwrap();
        assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), stops.to_vec());
        let c = (0.5f64 * 0.01).sin() / 0.01;
        for (t, x) in seen {
            assert!((x - 0.1 - c * t).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectories_do_not_cross() {
        // nonuniform flow: Gaussian envelope with chirped phase
        let field = static_field(
            |x| Complex64::from_polar((-(x - 0.5) * (x - 0.5) / 0.1).exp(), 4.0 * x + 6.0 * x * x),
            0.005,
            51,
        );
        let stops: Vec<f64> = (0..=20).map(|i| i as f64 * 0.02).collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let opts = IntegratorOptions::default();
        integrate_edge(&field, EdgeId(0), 0.3, 0.0, 0.4, &opts, &stops, |_, x| a.push(x)).unwrap();
        integrate_edge(&field, EdgeId(0), 0.3 + 1e-3, 0.0, 0.4, &opts, &stops, |_, x| b.push(x)).unwrap();
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| x < y));
    }
}
