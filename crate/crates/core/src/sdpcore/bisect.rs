use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeOutcome<W> {
    Feasible(W),
    Infeasible,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRecord<T> {
    pub value: T,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bisection<T, W> {
    Found {
        value: T,
        witness: W,
        /// Final `(infeasible, feasible)` pair, at most `tol` apart.
        bracket: (T, T),
        probes: Vec<ProbeRecord<T>>,
    },
    UpperInfeasible {
        probes: Vec<ProbeRecord<T>>,
    },
    Failure {
        bracket: (T, T),
        probes: Vec<ProbeRecord<T>>,
    },
}

/// Least feasible value in `(lo, hi]` up to `tol`, assuming feasibility is
/// monotone nondecreasing. `hi` is checked first; after that at most
/// `⌈log₂((hi − lo)/tol)⌉` probes are made.
pub fn bisect<T, W, E, F>(lo: T, hi: T, tol: T, probe: &mut F) -> Result<Bisection<T, W>, E>
where
    T: Real,
    F: FnMut(T) -> Result<ProbeOutcome<W>, E>,
{
    let mut probes = Vec::new();
    let mut witness = match probe(hi)? {
        ProbeOutcome::Feasible(w) => w,
        ProbeOutcome::Infeasible => {
            probes.push(ProbeRecord {
                value: hi,
                feasible: false,
            });
            return Ok(Bisection::UpperInfeasible { probes });
        }
        ProbeOutcome::Failure => {
            probes.push(ProbeRecord {
                value: hi,
                feasible: false,
            });
            return Ok(Bisection::Failure {
                bracket: (lo, hi),
                probes,
            });
        }
    };
    probes.push(ProbeRecord {
        value: hi,
        feasible: true,
    });
    let (mut lo, mut hi) = (lo, hi);
    let half = T::lit(0.5);
    while hi - lo > tol {
        let mid = lo + (hi - lo) * half;
        if !(mid > lo && mid < hi) {
            break;
        }
        match probe(mid)? {
            ProbeOutcome::Feasible(w) => {
                witness = w;
                hi = mid;
                probes.push(ProbeRecord {
                    value: mid,
                    feasible: true,
                });
            }
            ProbeOutcome::Infeasible => {
                lo = mid;
                probes.push(ProbeRecord {
                    value: mid,
                    feasible: false,
                });
            }
            ProbeOutcome::Failure => {
                probes.push(ProbeRecord {
                    value: mid,
                    feasible: false,
                });
                return Ok(Bisection::Failure {
                    bracket: (lo, hi),
                    probes,
                });
            }
        }
    }
    Ok(Bisection::Found {
        value: hi,
        witness,
        bracket: (lo, hi),
        probes,
    })
}
