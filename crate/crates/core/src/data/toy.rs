use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use libm::erf;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::Dataset;
use crate::error::{data_err, Result, TradeError};
use crate::matrix::Matrix;
use crate::model::{DataKind, GridBounds, LogDensity};

pub const TOY_NAMES: [&str; 6] = ["gaussian-grid", "two-rings", "checkerboard", "two-moons", "spiral", "pinwheel"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Toy {
    GaussianGrid,
    TwoRings,
    Checkerboard,
    TwoMoons,
    Spiral,
    Pinwheel,
}

impl Toy {
    pub const ALL: [Toy; 6] = [
        Toy::GaussianGrid,
        Toy::TwoRings,
        Toy::Checkerboard,
        Toy::TwoMoons,
        Toy::Spiral,
        Toy::Pinwheel,
    ];

    pub fn name(self) -> &'static str {
        TOY_NAMES[self as usize]
    }
}

impl FromStr for Toy {
    type Err = TradeError;

    fn from_str(s: &str) -> Result<Self> {
        Toy::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| data_err(format!("unknown toy density `{s}`; valid names: {}", TOY_NAMES.join(", "))))
    }
}

impl fmt::Display for Toy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// gaussian-grid: 3x3 centres, isotropic std, each coordinate truncated at 5 std
pub const GRID_SPACING: f64 = 1.5;
pub const GRID_STD: f64 = 0.1;
const GRID_CUT: f64 = 5.0;
// two-rings: radial normal around each radius, truncated at 4 std
pub const RING_RADII: [f64; 2] = [1.0, 2.0];
pub const RING_STD: f64 = 0.15;
const RING_CUT: f64 = 4.0;
// two-moons: arcs with isotropic noise truncated at radius 5 std
pub const MOON_STD: f64 = 0.1;
const MOON_CUT: f64 = 5.0;
const MOON_STEPS: usize = 2048;
// spiral: uniform radius, angle grows linearly with radius
const SPIRAL_RADIUS: (f64, f64) = (0.3, 2.3);
const SPIRAL_ARMS: usize = 2;
const SPIRAL_RATE: f64 = 2.0;
const SPIRAL_ANGLE_STD: f64 = 0.25;
// pinwheel: truncated-normal radius, five twisted arms
const PIN_RADIUS_MEAN: f64 = 1.2;
const PIN_RADIUS_STD: f64 = 0.3;
const PIN_RADIUS_CUT: f64 = 3.5;
const PIN_ARMS: usize = 5;
const PIN_RATE: f64 = 1.0;
const PIN_ANGLE_STD: f64 = 0.1;

fn normal_pdf(u: f64, s: f64) -> f64 {
    (-0.5 * (u / s).powi(2)).exp() / (s * (TAU).sqrt())
}

/// Mass of a standard normal within `±c`.
fn central_mass(c: f64) -> f64 {
    erf(c * FRAC_1_SQRT_2)
}

fn truncated_pdf(u: f64, s: f64, cut: f64) -> f64 {
    if u.abs() > cut * s {
        0.0
    } else {
        normal_pdf(u, s) / central_mass(cut)
    }
}

fn truncated_draw(rng: &mut dyn RngCore, s: f64, cut: f64) -> f64 {
    loop {
        let u: f64 = rng.sample::<f64, _>(StandardNormal);
        if u.abs() <= cut {
            return u * s;
        }
    }
}

/// Normal density of an angle wrapped onto the circle.
fn wrapped_normal(delta: f64, s: f64) -> f64 {
    let base = delta - TAU * (delta / TAU).round();
    (-3..=3).map(|w| normal_pdf(base + TAU * w as f64, s)).sum()
}

fn moon_centre(moon: usize, t: f64) -> (f64, f64) {
    if moon == 0 {
        (t.cos() - 0.5, t.sin() - 0.25)
    } else {
        (0.5 - t.cos(), 0.25 - t.sin())
    }
}

fn moon_density(x: f64, y: f64) -> f64 {
    let r2max = (MOON_CUT * MOON_STD).powi(2);
    let norm = 1.0 / (TAU * MOON_STD * MOON_STD * (1.0 - (-0.5 * MOON_CUT * MOON_CUT).exp()));
    let h = PI / MOON_STEPS as f64;
    let mut total = 0.0;
    for moon in 0..2 {
        let mut acc = 0.0;
        for s in 0..=MOON_STEPS {
            let (cx, cy) = moon_centre(moon, s as f64 * h);
            let r2 = (x - cx).powi(2) + (y - cy).powi(2);
            if r2 > r2max {
                continue;
            }
            let w = if s == 0 || s == MOON_STEPS {
                1.0
            } else if s % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * (-0.5 * r2 / (MOON_STD * MOON_STD)).exp();
        }
        total += acc * h / 3.0 / PI;
    }
    0.5 * total * norm
}

fn polar_density(x: f64, y: f64, radial: impl Fn(f64) -> f64, arms: usize, rate: f64, angle_std: f64) -> f64 {
    let rho = x.hypot(y);
    let f = radial(rho);
    if f == 0.0 || rho == 0.0 {
        return 0.0;
    }
    let theta = y.atan2(x);
    let ang: f64 = (0..arms)
        .map(|k| wrapped_normal(theta - TAU * k as f64 / arms as f64 - rate * rho, angle_std))
        .sum::<f64>()
        / arms as f64;
    f * ang / rho
}

fn spiral_radial(rho: f64) -> f64 {
    let (lo, hi) = SPIRAL_RADIUS;
    if (lo..=hi).contains(&rho) {
        1.0 / (hi - lo)
    } else {
        0.0
    }
}

fn pinwheel_radial(rho: f64) -> f64 {
    truncated_pdf(rho - PIN_RADIUS_MEAN, PIN_RADIUS_STD, PIN_RADIUS_CUT)
}

/// Analytic (or high-accuracy numeric) 2-D density with a matching sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToyDensity {
    pub toy: Toy,
}

impl ToyDensity {
    pub fn new(toy: Toy) -> Self {
        ToyDensity { toy }
    }

    pub fn name(&self) -> &'static str {
        self.toy.name()
    }

    /// Box holding the whole support.
    pub fn bounds(&self) -> GridBounds {
        match self.toy {
            Toy::GaussianGrid => GridBounds::square(-2.5, 2.5),
            Toy::TwoRings => GridBounds::square(-3.0, 3.0),
            Toy::Checkerboard => GridBounds::square(-2.0, 2.0),
            Toy::TwoMoons => GridBounds {
                x: (-2.0, 2.0),
                y: (-1.5, 1.5),
            },
            Toy::Spiral | Toy::Pinwheel => GridBounds::square(-2.5, 2.5),
        }
    }

    pub fn density_at(&self, x: f64, y: f64) -> f64 {
        match self.toy {
            Toy::GaussianGrid => {
                let c = [-GRID_SPACING, 0.0, GRID_SPACING];
                let px: f64 = c.iter().map(|&a| truncated_pdf(x - a, GRID_STD, GRID_CUT)).sum();
                let py: f64 = c.iter().map(|&b| truncated_pdf(y - b, GRID_STD, GRID_CUT)).sum();
                px * py / 9.0
            }
            Toy::TwoRings => {
                let r = x.hypot(y);
                if r == 0.0 {
                    return 0.0;
                }
                let radial: f64 = RING_RADII.iter().map(|&rk| 0.5 * truncated_pdf(r - rk, RING_STD, RING_CUT)).sum();
                radial / (TAU * r)
            }
            Toy::Checkerboard => {
                if !(-2.0..2.0).contains(&x) || !(-2.0..2.0).contains(&y) {
                    return 0.0;
                }
                let parity = (x.floor() as i64 + y.floor() as i64).rem_euclid(2);
                if parity == 0 {
                    0.125
                } else {
                    0.0
                }
            }
            Toy::TwoMoons => moon_density(x, y),
            Toy::Spiral => polar_density(x, y, spiral_radial, SPIRAL_ARMS, SPIRAL_RATE, SPIRAL_ANGLE_STD),
            Toy::Pinwheel => polar_density(x, y, pinwheel_radial, PIN_ARMS, PIN_RATE, PIN_ANGLE_STD),
        }
    }

    pub fn log_density_at(&self, x: f64, y: f64) -> f64 {
        self.density_at(x, y).ln()
    }

    pub fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Matrix {
        let mut data = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let (x, y) = self.draw(rng);
            data.push(x);
            data.push(y);
        }
        Matrix::new(n, 2, data).expect("two columns")
    }

    fn draw(&self, rng: &mut dyn RngCore) -> (f64, f64) {
        match self.toy {
            Toy::GaussianGrid => {
                let cx = GRID_SPACING * (rng.random_range(0..3) as f64 - 1.0);
                let cy = GRID_SPACING * (rng.random_range(0..3) as f64 - 1.0);
                (cx + truncated_draw(rng, GRID_STD, GRID_CUT), cy + truncated_draw(rng, GRID_STD, GRID_CUT))
            }
            Toy::TwoRings => {
                let rk = RING_RADII[rng.random_range(0..2)];
                let r = rk + truncated_draw(rng, RING_STD, RING_CUT);
                let th = rng.random_range(0.0..TAU);
                (r * th.cos(), r * th.sin())
            }
            Toy::Checkerboard => {
                let cell = rng.random_range(0..8);
                let row = cell / 2;
                let col = 2 * (cell % 2) + row % 2;
                let x = -2.0 + col as f64 + rng.random::<f64>();
                let y = -2.0 + row as f64 + rng.random::<f64>();
                (x, y)
            }
            Toy::TwoMoons => {
                let moon = rng.random_range(0..2);
                let (cx, cy) = moon_centre(moon, rng.random_range(0.0..PI));
                loop {
                    let nx: f64 = rng.sample::<f64, _>(StandardNormal) * MOON_STD;
                    let ny: f64 = rng.sample::<f64, _>(StandardNormal) * MOON_STD;
                    if nx.hypot(ny) <= MOON_CUT * MOON_STD {
                        return (cx + nx, cy + ny);
                    }
                }
            }
            Toy::Spiral => {
                let rho = rng.random_range(SPIRAL_RADIUS.0..SPIRAL_RADIUS.1);
                polar_draw(rng, rho, SPIRAL_ARMS, SPIRAL_RATE, SPIRAL_ANGLE_STD)
            }
            Toy::Pinwheel => {
                let rho = PIN_RADIUS_MEAN + truncated_draw(rng, PIN_RADIUS_STD, PIN_RADIUS_CUT);
                polar_draw(rng, rho, PIN_ARMS, PIN_RATE, PIN_ANGLE_STD)
            }
        }
    }
}

fn polar_draw(rng: &mut dyn RngCore, rho: f64, arms: usize, rate: f64, angle_std: f64) -> (f64, f64) {
    let k = rng.random_range(0..arms);
    let noise: f64 = rng.sample::<f64, _>(StandardNormal) * angle_std;
    let th = TAU * k as f64 / arms as f64 + rate * rho + noise;
    (rho * th.cos(), rho * th.sin())
}

impl LogDensity for ToyDensity {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != 2 {
            return Err(data_err(format!("toy densities are 2-dimensional, got {} columns", x.cols())));
        }
        Ok((0..x.rows()).map(|r| self.log_density_at(x.get(r, 0), x.get(r, 1))).collect())
    }
}

/// `n` samples from a named toy density (80/10/10 split) plus its oracle.
pub fn toy2d(name: &str, n: usize, seed: u64) -> Result<(Dataset, ToyDensity)> {
    let toy: Toy = name.parse()?;
    let density = ToyDensity::new(toy);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = density.sample(n, &mut rng);
    let mut ds = Dataset::with_random_splits(toy.name(), x, DataKind::Continuous, 0.8, 0.1, seed ^ 0x5eed)?;
    ds.note = format!("toy2d:{} n={n} seed={seed}", toy.name());
    Ok((ds, density))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn midpoint_mass(t: &ToyDensity, res: usize) -> f64 {
        let b = t.bounds();
        let (hx, hy) = ((b.x.1 - b.x.0) / res as f64, (b.y.1 - b.y.0) / res as f64);
        let mut total = 0.0;
        for j in 0..res {
            for i in 0..res {
                total += t.density_at(b.x.0 + (i as f64 + 0.5) * hx, b.y.0 + (j as f64 + 0.5) * hy);
            }
        }
        total * hx * hy
    }

    #[test]
    fn unknown_name_lists_valid_ones() {
        let err = toy2d("swiss-roll", 10, 0).unwrap_err().to_string();
        for n in TOY_NAMES {
            assert!(err.contains(n));
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for toy in Toy::ALL {
            let res = if toy == Toy::TwoMoons { 400 } else { 1200 };
            let mass = midpoint_mass(&ToyDensity::new(toy), res);
            assert!((mass - 1.0).abs() < 1e-3, "{toy}: mass {mass}");
        }
    }

    #[test]
    fn samples_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for toy in Toy::ALL {
            let t = ToyDensity::new(toy);
            let b = t.bounds();
            let x = t.sample(5000, &mut rng);
            for r in 0..x.rows() {
                let (px, py) = (x.get(r, 0), x.get(r, 1));
                assert!(px >= b.x.0 && px <= b.x.1 && py >= b.y.0 && py <= b.y.1, "{toy}");
                assert!(t.density_at(px, py) > 0.0, "{toy} sample outside support");
            }
        }
    }

    #[test]
    fn ring_radii_within_truncation() {
        let (ds, _) = toy2d("two-rings", 20000, 1).unwrap();
        let lo = RING_RADII[0] - RING_CUT * RING_STD;
        let hi = RING_RADII[1] + RING_CUT * RING_STD;
        for r in 0..ds.x.rows() {
            let rad = ds.x.get(r, 0).hypot(ds.x.get(r, 1));
            assert!(rad >= lo && rad <= hi);
        }
    }

    #[test]
    fn gaussian_grid_mean_is_centroid() {
        let n = 20000;
        let (ds, _) = toy2d("gaussian-grid", n, 2).unwrap();
        // per-coordinate std of the mixture: spacing²·2/3 + component variance
        let sd = (GRID_SPACING * GRID_SPACING * 2.0 / 3.0 + GRID_STD * GRID_STD).sqrt();
        for m in ds.x.column_means() {
            assert!(m.abs() < 3.0 * sd / (n as f64).sqrt(), "mean {m}");
        }
    }

    #[test]
    fn oracle_and_sampler_agree_on_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for toy in Toy::ALL {
            let t = ToyDensity::new(toy);
            let n = 20000;
            let x = t.sample(n, &mut rng);
            let lp = t.log_density(&x).unwrap();
            let mean = lp.iter().sum::<f64>() / n as f64;
            let var = lp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let b = t.bounds();
            let res = if toy == Toy::TwoMoons { 300 } else { 1000 };
            let (hx, hy) = ((b.x.1 - b.x.0) / res as f64, (b.y.1 - b.y.0) / res as f64);
            let mut neg_entropy = 0.0;
            for j in 0..res {
                for i in 0..res {
                    let p = t.density_at(b.x.0 + (i as f64 + 0.5) * hx, b.y.0 + (j as f64 + 0.5) * hy);
                    if p > 0.0 {
                        neg_entropy += p * p.ln() * hx * hy;
                    }
                }
            }
            assert!(
                (mean - neg_entropy).abs() < 2.0 * se + 2e-3,
                "{toy}: sample mean {mean}, quadrature {neg_entropy}, se {se}"
            );
        }
    }

    #[test]
    fn generators_are_seed_deterministic() {
        assert_eq!(toy2d("spiral", 100, 9).unwrap().0, toy2d("spiral", 100, 9).unwrap().0);
        assert_ne!(toy2d("spiral", 100, 9).unwrap().0.x, toy2d("spiral", 100, 10).unwrap().0.x);
    }
}
