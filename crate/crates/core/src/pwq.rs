//! Exact global minimization of sums of capped parabolas.
//!
//! Each term is `min(curvature * (d - center)^2 + offset, cap)` with positive
//! curvature. The sum is piecewise quadratic with breakpoints where a term
//! hits its cap, so the global minimum is found exactly by sweeping the
//! sorted breakpoints and minimizing the active quadratic on each interval.
//! Ties are broken toward the smallest `d` by scanning left to right and
//! keeping the first strict minimum.

/// One term of the objective: `min(curvature (d-center)^2 + offset, cap)`.
#[derive(Debug, Clone, Copy)]
pub struct CappedParabola {
    pub curvature: f64,
    pub center: f64,
    pub offset: f64,
    pub cap: f64,
}

impl CappedParabola {
    pub fn eval(&self, d: f64) -> f64 {
        let u = d - self.center;
        (self.curvature * u * u + self.offset).min(self.cap)
    }

    /// Half-width of the interval where the parabola is below its cap.
    fn active_radius(&self) -> Option<f64> {
        if self.cap.is_infinite() {
            return None; // never capped; handled as always-active
        }
        let head = self.cap - self.offset;
        if head > 0.0 {
            Some((head / self.curvature).sqrt())
        } else {
            None // never below the cap
        }
    }
}

/// Evaluate the full objective at `d`.
pub fn eval_sum(terms: &[CappedParabola], d: f64) -> f64 {
    terms.iter().map(|t| t.eval(d)).sum()
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Enter(usize),
    Exit(usize),
}

/// Exact global minimizer of `sum_i min(a_i (d - v_i)^2 + c_i, cap_i)`.
///
/// Returns `(argmin, min_value)`. The value is recomputed from the terms at
/// the returned point so it carries no sweep accumulation error.
pub fn minimize_sum(terms: &[CappedParabola]) -> (f64, f64) {
    // Running sums for the active set: a = sum curv, b = sum curv*center,
    // c = sum (curv*center^2 + offset). Quadratic on an interval:
    // q(d) = a d^2 - 2 b d + c + capped_constant.
    let mut a = 0.0f64;
    let mut b = 0.0f64;
    let mut c = 0.0f64;
    let mut capped = 0.0f64; // sum of caps over currently inactive terms

    let mut events: Vec<(f64, Event)> = Vec::with_capacity(2 * terms.len());
    for (i, t) in terms.iter().enumerate() {
        debug_assert!(t.curvature > 0.0, "curvature must be positive");
        if t.cap.is_infinite() {
            a += t.curvature;
            b += t.curvature * t.center;
            c += t.curvature * t.center * t.center + t.offset;
        } else if let Some(r) = t.active_radius() {
            events.push((t.center - r, Event::Enter(i)));
            events.push((t.center + r, Event::Exit(i)));
            capped += t.cap;
        } else {
            capped += t.cap;
        }
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut best_d = f64::NAN;
    let mut best_val = f64::INFINITY;
    let consider = |d: f64, val: f64, best_d: &mut f64, best_val: &mut f64| {
        if val < *best_val {
            *best_val = val;
            *best_d = d;
        }
    };

    if events.is_empty() {
        // Everything permanently active (infinite caps) or permanently capped.
        if a > 0.0 {
            let v = b / a;
            return (v, eval_sum(terms, v));
        }
        return (0.0, capped);
    }

    // Interval before the first breakpoint has only infinite-cap terms active.
    if a > 0.0 {
        let v = (b / a).min(events[0].0);
        consider(v, a * v * v - 2.0 * b * v + c + capped, &mut best_d, &mut best_val);
    }

    for (k, &(d_evt, evt)) in events.iter().enumerate() {
        match evt {
            Event::Enter(i) => {
                let t = &terms[i];
                a += t.curvature;
                b += t.curvature * t.center;
                c += t.curvature * t.center * t.center + t.offset;
                capped -= t.cap;
            }
            Event::Exit(i) => {
                let t = &terms[i];
                a -= t.curvature;
                b -= t.curvature * t.center;
                c -= t.curvature * t.center * t.center + t.offset;
                capped += t.cap;
            }
        }
        let hi = if k + 1 < events.len() {
            events[k + 1].0
        } else {
            f64::INFINITY
        };
        if a > 0.0 {
            let v = (b / a).clamp(d_evt, hi);
            consider(v, a * v * v - 2.0 * b * v + c + capped, &mut best_d, &mut best_val);
        } else {
            // flat stretch; left endpoint for the smallest-d tie-break
            consider(d_evt, c + capped, &mut best_d, &mut best_val);
        }
    }

    (best_d, eval_sum(terms, best_d))
}
