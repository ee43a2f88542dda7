//! Exact solutions of the isentropic Riemann problem, used as reference data
//! for convergence studies and for weak-form fixtures with genuine shocks.
//!
//! The system has two characteristic families; the solution of a Riemann
//! problem consists of a 1-wave (shock or rarefaction), a constant star
//! state, and a 2-wave. Cell averages are computed exactly: constants
//! directly, rarefaction fans in closed form through the sound-speed
//! substitution, so sampled fields are exact weak solutions up to rounding.

use crate::error::{Error, Result};
use crate::state::{ConservedField, EosParams, TorusGrid};

/// Primitive state `(rho, u)` on one side of the jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannState {
    pub rho: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Wave {
    Shock { speed: f64 },
    /// `head` is the edge adjacent to the outer state, `tail` the edge
    /// adjacent to the star region.
    Rarefaction { head: f64, tail: f64 },
}

/// Riemann invariant potential `psi(rho) = 2 c(rho) / (gamma - 1)`.
fn psi(rho: f64, eos: &EosParams) -> f64 {
    2.0 * eos.sound_speed(rho) / (eos.gamma - 1.0)
}

/// Velocity drop across a 1-wave connecting `rho_k` (outer) to `rho` (inner):
/// shock branch for compression, integrated invariant for rarefaction.
fn wave_fn(rho: f64, rho_k: f64, eos: &EosParams) -> f64 {
    if rho > rho_k {
        let dp = eos.p(rho) - eos.p(rho_k);
        (dp * (rho - rho_k) / (rho * rho_k)).sqrt()
    } else {
        psi(rho, eos) - psi(rho_k, eos)
    }
}

/// Exact solution of one Riemann problem centered at `x = 0`.
#[derive(Debug, Clone)]
pub struct ExactRiemann {
    pub left: RiemannState,
    pub right: RiemannState,
    pub eos: EosParams,
    pub rho_star: f64,
    pub u_star: f64,
    pub left_wave: Wave,
    pub right_wave: Wave,
}

impl ExactRiemann {
    pub fn solve(left: RiemannState, right: RiemannState, eos: EosParams) -> Result<Self> {
        if left.rho <= 0.0 || right.rho <= 0.0 {
            return Err(Error::NegativeDensity(left.rho.min(right.rho)));
        }
        // G(rho) = F(rho; L) + F(rho; R) - (uL - uR), monotone increasing.
        let du = left.u - right.u;
        let g = |rho: f64| wave_fn(rho, left.rho, &eos) + wave_fn(rho, right.rho, &eos) - du;
        if g(1e-14) >= 0.0 {
            return Err(Error::InadmissibleField(
                "Riemann data produce vacuum".into(),
            ));
        }
        let mut lo = 1e-14;
        let mut hi = left.rho.max(right.rho);
        while g(hi) < 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::InadmissibleField(
                    "Riemann star-state iteration diverged".into(),
                ));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rho_star = 0.5 * (lo + hi);
        let u_star = left.u - wave_fn(rho_star, left.rho, &eos);

        let c_star = eos.sound_speed(rho_star);
        let left_wave = if rho_star > left.rho {
            let m_star = rho_star * u_star;
            Wave::Shock { speed: (m_star - left.rho * left.u) / (rho_star - left.rho) }
        } else {
            Wave::Rarefaction {
                head: left.u - eos.sound_speed(left.rho),
                tail: u_star - c_star,
            }
        };
        let right_wave = if rho_star > right.rho {
            let m_star = rho_star * u_star;
            Wave::Shock { speed: (m_star - right.rho * right.u) / (rho_star - right.rho) }
        } else {
            Wave::Rarefaction {
                head: right.u + eos.sound_speed(right.rho),
                tail: u_star + c_star,
            }
        };
        Ok(ExactRiemann { left, right, eos, rho_star, u_star, left_wave, right_wave })
    }

    /// Fastest signal speed (for validity horizons on bounded domains).
    pub fn max_wave_speed(&self) -> f64 {
        let speeds = [
            match self.left_wave {
                Wave::Shock { speed } => speed.abs(),
                Wave::Rarefaction { head, tail } => head.abs().max(tail.abs()),
            },
            match self.right_wave {
                Wave::Shock { speed } => speed.abs(),
                Wave::Rarefaction { head, tail } => head.abs().max(tail.abs()),
            },
        ];
        speeds.into_iter().fold(0.0, f64::max)
    }

    fn fan_state_left(&self, xi: f64) -> (f64, f64) {
        let g = self.eos.gamma;
        let b = self.left.u + psi(self.left.rho, &self.eos);
        let u = (2.0 * xi + (g - 1.0) * b) / (g + 1.0);
        let c = u - xi;
        let rho = (c * c / (self.eos.a * g)).powf(1.0 / (g - 1.0));
        (rho, u)
    }

    fn fan_state_right(&self, xi: f64) -> (f64, f64) {
        let g = self.eos.gamma;
        let b = self.right.u - psi(self.right.rho, &self.eos);
        let u = (2.0 * xi + (g - 1.0) * b) / (g + 1.0);
        let c = xi - u;
        let rho = (c * c / (self.eos.a * g)).powf(1.0 / (g - 1.0));
        (rho, u)
    }

    /// Self-similar sample at `xi = x / t`, returning `(rho, u)`.
    pub fn sample(&self, xi: f64) -> (f64, f64) {
        match self.left_wave {
            Wave::Shock { speed } => {
                if xi <= speed {
                    return (self.left.rho, self.left.u);
                }
            }
            Wave::Rarefaction { head, tail } => {
                if xi <= head {
                    return (self.left.rho, self.left.u);
                }
                if xi < tail {
                    return self.fan_state_left(xi);
                }
            }
        }
        match self.right_wave {
            Wave::Shock { speed } => {
                if xi >= speed {
                    return (self.right.rho, self.right.u);
                }
            }
            Wave::Rarefaction { head, tail } => {
                if xi >= head {
                    return (self.right.rho, self.right.u);
                }
                if xi > tail {
                    return self.fan_state_right(xi);
                }
            }
        }
        (self.rho_star, self.u_star)
    }

    /// Exact `(int rho, int rho u)` over `[x_lo, x_hi]` at time `t > 0`.
    pub fn integrals(&self, x_lo: f64, x_hi: f64, t: f64) -> (f64, f64) {
        assert!(x_hi >= x_lo);
        if t <= 0.0 {
            // initial data: jump at x = 0
            let lo_part = (x_hi.min(0.0) - x_lo.min(0.0)).max(0.0);
            let hi_part = (x_hi.max(0.0) - x_lo.max(0.0)).max(0.0);
            return (
                self.left.rho * lo_part + self.right.rho * hi_part,
                self.left.rho * self.left.u * lo_part + self.right.rho * self.right.u * hi_part,
            );
        }
        // breakpoints in xi between the five (at most) regions
        let mut cuts: Vec<f64> = Vec::with_capacity(4);
        match self.left_wave {
            Wave::Shock { speed } => cuts.push(speed),
            Wave::Rarefaction { head, tail } => {
                cuts.push(head);
                cuts.push(tail);
            }
        }
        match self.right_wave {
            Wave::Shock { speed } => cuts.push(speed),
            Wave::Rarefaction { head, tail } => {
                cuts.push(tail);
                cuts.push(head);
            }
        }
        let mut edges = vec![x_lo / t];
        for c in cuts {
            if c > x_lo / t && c < x_hi / t {
                edges.push(c);
            }
        }
        edges.push(x_hi / t);
        let mut mass = 0.0;
        let mut mom = 0.0;
        for w in edges.windows(2) {
            let (m0, m1) = self.region_integrals(w[0], w[1]);
            mass += m0 * t;
            mom += m1 * t;
        }
        (mass, mom)
    }

    /// `(int rho dxi, int rho u dxi)` over a xi-interval lying in one region.
    fn region_integrals(&self, xi0: f64, xi1: f64) -> (f64, f64) {
        let mid = 0.5 * (xi0 + xi1);
        let g = self.eos.gamma;
        // classify the region via a point sample
        let in_left_fan = matches!(self.left_wave, Wave::Rarefaction { head, tail } if mid > head && mid < tail);
        let in_right_fan = matches!(self.right_wave, Wave::Rarefaction { head, tail } if mid > tail && mid < head);
        if in_left_fan || in_right_fan {
            // substitution by sound speed: rho = K c^q with q = 2/(gamma-1),
            // c linear in xi, u affine in c.
            let q = 2.0 / (g - 1.0);
            let k = (self.eos.a * g).powf(-1.0 / (g - 1.0));
            let (c0, c1, jac, b, u_slope) = if in_left_fan {
                let b = self.left.u + psi(self.left.rho, &self.eos);
                // c = (g-1)(b - xi)/(g+1), dxi = -(g+1)/(g-1) dc, u = b - 2c/(g-1)
                let c_of = |xi: f64| (g - 1.0) * (b - xi) / (g + 1.0);
                (c_of(xi0), c_of(xi1), -(g + 1.0) / (g - 1.0), b, -2.0 / (g - 1.0))
            } else {
                let b = self.right.u - psi(self.right.rho, &self.eos);
                // c = (g-1)(xi - b)/(g+1), dxi = +(g+1)/(g-1) dc, u = b + 2c/(g-1)
                let c_of = |xi: f64| (g - 1.0) * (xi - b) / (g + 1.0);
                (c_of(xi0), c_of(xi1), (g + 1.0) / (g - 1.0), b, 2.0 / (g - 1.0))
            };
            let pow_int = |c: f64, p: f64| c.powf(p + 1.0) / (p + 1.0);
            let mass = jac * k * (pow_int(c1, q) - pow_int(c0, q));
            let mom = jac
                * k
                * (b * (pow_int(c1, q) - pow_int(c0, q))
                    + u_slope * (pow_int(c1, q + 1.0) - pow_int(c0, q + 1.0)));
            (mass, mom)
        } else {
            let (rho, u) = self.sample(mid);
            (rho * (xi1 - xi0), rho * u * (xi1 - xi0))
        }
    }
}

/// Two back-to-back Riemann problems on the torus: the given jump at `x = 0`
/// and the complementary jump at the seam `x = +-1`. Exact while the wave
/// fans of the two problems stay apart.
#[derive(Debug, Clone)]
pub struct TorusRiemann {
    pub center: ExactRiemann,
    pub seam: ExactRiemann,
}

impl TorusRiemann {
    pub fn solve(left: RiemannState, right: RiemannState, eos: EosParams) -> Result<Self> {
        let center = ExactRiemann::solve(left, right, eos)?;
        let seam = ExactRiemann::solve(right, left, eos)?;
        Ok(TorusRiemann { center, seam })
    }

    /// Latest time at which the two wave systems are still separated by a
    /// margin (waves confined to within 0.45 of their centers).
    pub fn valid_horizon(&self) -> f64 {
        0.45 / self.center.max_wave_speed().max(self.seam.max_wave_speed())
    }

    /// Exact cell averages on `grid` at time `t`.
    pub fn sample_field(&self, grid: TorusGrid, t: f64) -> Result<ConservedField> {
        if grid.dim() != 1 {
            return Err(Error::BadDimension(grid.dim()));
        }
        if t > self.valid_horizon() {
            return Err(Error::InadmissibleField(format!(
                "torus Riemann solution invalid beyond t = {}",
                self.valid_horizon()
            )));
        }
        let h = grid.spacing();
        let n = grid.cells_per_axis();
        let mut rho = Vec::with_capacity(n);
        let mut mom = Vec::with_capacity(n);
        for i in 0..n {
            let x0 = -1.0 + i as f64 * h;
            let x1 = x0 + h;
            let xc = 0.5 * (x0 + x1);
            let (mass, momentum) = if xc.abs() <= 0.5 {
                self.center.integrals(x0, x1, t)
            } else {
                // seam problem centered at +-1
                let shift = if xc > 0.0 { 1.0 } else { -1.0 };
                self.seam.integrals(x0 - shift, x1 - shift, t)
            };
            rho.push(mass / h);
            mom.push([momentum / h, 0.0]);
        }
        ConservedField::new(grid, rho, mom, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eos2() -> EosParams {
        EosParams::new(1.0, 2.0).unwrap()
    }

    fn dam_break() -> ExactRiemann {
        ExactRiemann::solve(
            RiemannState { rho: 2.0, u: 0.0 },
            RiemannState { rho: 0.5, u: 0.0 },
            eos2(),
        )
        .unwrap()
    }

    #[test]
    fn dam_break_structure_is_rarefaction_plus_shock() {
        let rp = dam_break();
        assert!(matches!(rp.left_wave, Wave::Rarefaction { .. }));
        assert!(matches!(rp.right_wave, Wave::Shock { .. }));
        assert!(rp.rho_star > 0.5 && rp.rho_star < 2.0);
        assert!(rp.u_star > 0.0);
    }

    #[test]
    fn rankine_hugoniot_at_the_shock() {
        let rp = dam_break();
        let Wave::Shock { speed } = rp.right_wave else { panic!("expected shock") };
        let (r1, u1) = (rp.rho_star, rp.u_star);
        let (r2, u2) = (rp.right.rho, rp.right.u);
        // mass jump
        let mass = speed * (r1 - r2) - (r1 * u1 - r2 * u2);
        assert!(mass.abs() < 1e-9, "mass RH violated: {mass}");
        // momentum jump
        let f1 = r1 * u1 * u1 + rp.eos.p(r1);
        let f2 = r2 * u2 * u2 + rp.eos.p(r2);
        let momentum = speed * (r1 * u1 - r2 * u2) - (f1 - f2);
        assert!(momentum.abs() < 1e-8, "momentum RH violated: {momentum}");
        // Lax admissibility: characteristics converge on the shock
        assert!(u1 + rp.eos.sound_speed(r1) > speed);
        assert!(u2 + rp.eos.sound_speed(r2) < speed);
    }

    #[test]
    fn invariant_constant_through_rarefaction() {
        let rp = dam_break();
        let Wave::Rarefaction { head, tail } = rp.left_wave else { panic!() };
        let w0 = rp.left.u + psi(rp.left.rho, &rp.eos);
        for i in 0..=20 {
            let xi = head + (tail - head) * i as f64 / 20.0;
            let (rho, u) = rp.sample(xi);
            assert!((u + psi(rho, &rp.eos) - w0).abs() < 1e-9);
            // self-similarity: u - c = xi inside the fan
            assert!((u - rp.eos.sound_speed(rho) - xi).abs() < 1e-9);
        }
    }

    #[test]
    fn sample_is_continuous_across_fan_edges() {
        let rp = dam_break();
        let Wave::Rarefaction { head, tail } = rp.left_wave else { panic!() };
        let (r_h_minus, _) = rp.sample(head - 1e-12);
        let (r_h_plus, _) = rp.sample(head + 1e-12);
        assert!((r_h_minus - r_h_plus).abs() < 1e-6);
        let (r_t_minus, _) = rp.sample(tail - 1e-12);
        let (r_t_plus, _) = rp.sample(tail + 1e-12);
        assert!((r_t_minus - r_t_plus).abs() < 1e-6);
    }

    #[test]
    fn integrals_match_fine_quadrature() {
        // general gamma to exercise the closed-form fan integrals
        let rp = ExactRiemann::solve(
            RiemannState { rho: 1.8, u: 0.1 },
            RiemannState { rho: 0.4, u: -0.2 },
            EosParams::new(0.7, 1.4).unwrap(),
        )
        .unwrap();
        let t = 0.15;
        let (mass, mom) = rp.integrals(-0.6, 0.7, t);
        let n = 400_000;
        let dx = 1.3 / n as f64;
        let (mut qm, mut qp) = (0.0, 0.0);
        for i in 0..n {
            let x = -0.6 + (i as f64 + 0.5) * dx;
            let (r, u) = rp.sample(x / t);
            qm += r * dx;
            qp += r * u * dx;
        }
        assert!((mass - qm).abs() < 1e-6, "mass {mass} vs {qm}");
        assert!((mom - qp).abs() < 1e-6, "momentum {mom} vs {qp}");
    }

    #[test]
    fn torus_field_conserves_mass_and_momentum() {
        let grid = TorusGrid::new(1, 128).unwrap();
        let tr = TorusRiemann::solve(
            RiemannState { rho: 2.0, u: 0.0 },
            RiemannState { rho: 0.5, u: 0.0 },
            eos2(),
        )
        .unwrap();
        let f0 = tr.sample_field(grid, 0.0).unwrap();
        let t = 0.8 * tr.valid_horizon();
        let ft = tr.sample_field(grid, t).unwrap();
        assert!((f0.total_mass() - ft.total_mass()).abs() < 1e-10);
        assert!((f0.total_momentum()[0] - ft.total_momentum()[0]).abs() < 1e-10);
        // exact cell averages of the initial jump
        assert!((f0.rho[0] - 2.0).abs() < 1e-13);
        assert!((f0.rho[96] - 0.5).abs() < 1e-13);
    }

    #[test]
    fn vacuum_data_rejected() {
        let res = ExactRiemann::solve(
            RiemannState { rho: 1.0, u: -10.0 },
            RiemannState { rho: 1.0, u: 10.0 },
            eos2(),
        );
        assert!(res.is_err());
    }
}
