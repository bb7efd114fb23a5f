//! The noise coefficient pair (xi, eta) defining the first-order operator
//! D = xi d/dx + eta, together with the small expression language used to
//! spell coefficient and initial-data fields in configs and on the command
//! line.
//!
//! Preset grammar, terms joined by `+`:
//!
//! ```text
//! expr   := term ('+' term)*
//! term   := [coef '*'] atom | number
//! atom   := const:<c> | sin:<k> | cos:<k> | gauss:<sigma> | file:<path>
//! ```
//!
//! `sin:k` / `cos:k` are the k-th harmonics sin(2 pi k x / L), `gauss:s` is
//! the periodized Gaussian bump exp(-(x - L/2)^2 / 2 s^2) summed over images,
//! a bare number is a constant, and `file:p` loads a stored field (CSV or
//! raw) that must match the working grid. For the eta slot the extra keyword
//! `holm` selects the coupling eta = 2 xi'.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid1D;

/// Smooth periodic coefficients of D = xi d/dx + eta, with the derivatives
/// the solvers need precomputed. Construction enforces a spectral-tail gate:
/// a coefficient whose top-third modes carry more than 1e-10 of its peak
/// amplitude is not resolved on this grid and is rejected.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    xi: Field,
    eta: Field,
    xi_prime: Field,
    xi_second: Field,
    eta_prime: Field,
    xi_max_abs: f64,
}

fn check_resolved(name: &str, f: &Field) -> Result<()> {
    let spec = f.spectrum();
    let grid = f.grid();
    let cutoff = grid.dealias_cutoff();
    let mut peak = 0.0f64;
    let mut tail = 0.0f64;
    for (j, c) in spec.iter().enumerate() {
        let m = grid.signed_mode(j).unsigned_abs() as usize;
        let a = c.norm();
        peak = peak.max(a);
        if m > cutoff {
            tail = tail.max(a);
        }
    }
    if tail > 1e-10 * peak {
        return Err(Error::NotSmooth(format!(
            "{name}: spectral tail {tail:.3e} exceeds 1e-10 of peak {peak:.3e} \
             beyond mode {cutoff}"
        )));
    }
    Ok(())
}

impl NoiseSpec {
    pub fn new(xi: Field, eta: Field) -> Result<Self> {
        xi.grid().check_same(eta.grid())?;
        check_resolved("xi", &xi)?;
        check_resolved("eta", &eta)?;
        let xi_prime = xi.differentiate(1)?;
        let xi_second = xi.differentiate(2)?;
        let eta_prime = eta.differentiate(1)?;
        let xi_max_abs = xi.max_abs();
        Ok(NoiseSpec { xi, eta, xi_prime, xi_second, eta_prime, xi_max_abs })
    }

    /// The coupling eta = 2 xi', which pairs the stretching term with the
    /// advection the way the momentum equation does.
    pub fn holm(xi: Field) -> Result<Self> {
        let eta = xi.differentiate(1)?.scale(2.0);
        NoiseSpec::new(xi, eta)
    }

    pub fn zero(grid: Grid1D) -> Self {
        NoiseSpec::new(Field::zeros(grid), Field::zeros(grid)).expect("zero noise is smooth")
    }

    pub fn grid(&self) -> &Grid1D {
        self.xi.grid()
    }

    pub fn xi(&self) -> &Field {
        &self.xi
    }

    pub fn eta(&self) -> &Field {
        &self.eta
    }

    pub fn xi_prime(&self) -> &Field {
        &self.xi_prime
    }

    pub fn xi_second(&self) -> &Field {
        &self.xi_second
    }

    pub fn eta_prime(&self) -> &Field {
        &self.eta_prime
    }

    pub fn xi_max_abs(&self) -> f64 {
        self.xi_max_abs
    }

    pub fn is_zero(&self) -> bool {
        self.xi.max_abs() == 0.0 && self.eta.max_abs() == 0.0
    }
}

/// Evaluate a preset expression on a grid.
pub fn parse_preset(grid: Grid1D, text: &str) -> Result<Field> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::invalid("empty preset expression"));
    }
    let mut acc = Field::zeros(grid);
    for term in text.split('+') {
        acc = acc.add(&parse_term(grid, term.trim())?);
    }
    Ok(acc)
}

/// Evaluate an eta preset, where `holm` means 2 xi'.
pub fn parse_eta_preset(grid: Grid1D, text: &str, xi: &Field) -> Result<Field> {
    if text.trim() == "holm" {
        Ok(xi.differentiate(1)?.scale(2.0))
    } else {
        parse_preset(grid, text)
    }
}

fn parse_term(grid: Grid1D, term: &str) -> Result<Field> {
    if term.is_empty() {
        return Err(Error::invalid("empty term in preset expression"));
    }
    let (coef, atom) = match term.split_once('*') {
        Some((c, a)) => {
            let coef: f64 = c.trim().parse().map_err(|_| {
                Error::invalid(format!("bad coefficient `{}` in term `{term}`", c.trim()))
            })?;
            (coef, a.trim())
        }
        None => (1.0, term),
    };
    let field = parse_atom(grid, atom)?;
    Ok(if coef == 1.0 { field } else { field.scale(coef) })
}

fn parse_atom(grid: Grid1D, atom: &str) -> Result<Field> {
    if let Some((kind, arg)) = atom.split_once(':') {
        let kind = kind.trim();
        let arg = arg.trim();
        let num = |what: &str| -> Result<f64> {
            arg.parse()
                .map_err(|_| Error::invalid(format!("bad {what} `{arg}` in preset `{atom}`")))
        };
        match kind {
            "const" => Ok(Field::constant(grid, num("constant")?)),
            "sin" => {
                let k = harmonic(num("harmonic index")?, grid)?;
                Ok(Field::from_fn(grid, |x| (k * x).sin()))
            }
            "cos" => {
                let k = harmonic(num("harmonic index")?, grid)?;
                Ok(Field::from_fn(grid, |x| (k * x).cos()))
            }
            "gauss" => {
                let sigma = num("width")?;
                if !(sigma > 0.0) {
                    return Err(Error::invalid(format!("gauss width must be positive, got {arg}")));
                }
                Ok(periodized_gaussian(grid, sigma))
            }
            "file" => crate::fio::read_field(arg).and_then(|f| {
                grid.check_same(f.grid())?;
                Ok(f)
            }),
            other => Err(Error::invalid(format!("unknown preset kind `{other}`"))),
        }
    } else {
        let c: f64 = atom
            .parse()
            .map_err(|_| Error::invalid(format!("unknown preset `{atom}`")))?;
        Ok(Field::constant(grid, c))
    }
}

fn harmonic(k: f64, grid: Grid1D) -> Result<f64> {
    if k.fract() != 0.0 || k < 0.0 {
        return Err(Error::invalid(format!(
            "harmonic index must be a non-negative integer, got {k}"
        )));
    }
    Ok(std::f64::consts::TAU * k / grid.length())
}

fn periodized_gaussian(grid: Grid1D, sigma: f64) -> Field {
    let l = grid.length();
    let center = 0.5 * l;
    Field::from_fn(grid, |x| {
        let mut acc = 0.0;
        for j in -8i32..=8 {
            let d = x - center - j as f64 * l;
            acc += (-0.5 * d * d / (sigma * sigma)).exp();
        }
        acc
    })
}
