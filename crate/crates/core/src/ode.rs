//! Dormand–Prince 5(4) integrator for small fixed-size systems.

/// Step-size controller settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 2_000_000,
        }
    }
}

/// Returned by the step observer after every accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOutcome<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    /// `true` when the observer requested an early stop.
    pub stopped: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeFailure {
    StepUnderflow { t: f64 },
    TooManySteps { t: f64 },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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

fn lin<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t1` (either direction).
///
/// `rhs` returns `None` when the state is outside its domain; the step is
/// then rejected and retried with a smaller size. `observe` runs after each
/// accepted step and can stop the integration early.
pub fn dopri5<const N: usize, F, O>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: OdeOptions,
    mut observe: O,
) -> Result<OdeOutcome<N>, OdeFailure>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
    O: FnMut(f64, &[f64; N]) -> Control,
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(OdeOutcome {
            t: t0,
            y: y0,
            stopped: false,
            steps: 0,
        });
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let Some(mut k1) = rhs(t, &y) else {
        return Err(OdeFailure::StepUnderflow { t });
    };
    let mut h = (span.abs() * 1e-3).min(1e-2) * dir;
    let h_floor = 1e-14 * (t0.abs().max(t1.abs()).max(1.0));
    let mut steps = 0;

    while (t1 - t) * dir > 0.0 {
        if steps >= opts.max_steps {
            return Err(OdeFailure::TooManySteps { t });
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        if h.abs() < h_floor && (t1 - t).abs() > h_floor {
            return Err(OdeFailure::StepUnderflow { t });
        }
        let stage = |rhs: &mut F, tt: f64, yy: [f64; N]| rhs(tt, &yy);
        let trial = (|| {
            let k2 = stage(&mut rhs, t + C2 * h, lin(&y, h, &[(A21, &k1)]))?;
            let k3 = stage(&mut rhs, t + C3 * h, lin(&y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = stage(
                &mut rhs,
                t + C4 * h,
                lin(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            )?;
            let k5 = stage(
                &mut rhs,
                t + C5 * h,
                lin(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = stage(
                &mut rhs,
                t + h,
                lin(
                    &y,
                    h,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
            )?;
            let y_new = lin(
                &y,
                h,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            let k7 = stage(&mut rhs, t + h, y_new)?;
            let mut err = 0.0;
            for i in 0..N {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc) * (e / sc);
            }
            Some((y_new, k7, (err / N as f64).sqrt()))
        })();

        match trial {
            None => {
                h *= 0.25;
            }
            Some((y_new, k7, err)) if err.is_finite() && err <= 1.0 => {
                t += h;
                y = y_new;
                k1 = k7;
                steps += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h *= fac;
                if observe(t, &y) == Control::Stop {
                    return Ok(OdeOutcome {
                        t,
                        y,
                        stopped: true,
                        steps,
                    });
                }
            }
            Some((_, _, err)) => {
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                h *= fac;
            }
        }
    }
    Ok(OdeOutcome {
        t,
        y,
        stopped: false,
        steps,
    })
}
