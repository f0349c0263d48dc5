//! Point-set generators: self-similar fractals, a Weierstrass graph, a Lorenz
//! trajectory and uniform samples of the unit sphere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::points::PointSet;

pub const MAX_CANTOR_LEVEL: u32 = 26;
/// Largest carpet/sponge output accepted.
pub const MAX_FRACTAL_POINTS: u64 = 1 << 24;

/// Left endpoints of the `2^level` intervals of the middle-thirds construction.
pub fn generate_cantor(level: u32) -> Result<PointSet> {
    if level > MAX_CANTOR_LEVEL {
        return Err(invalid(
            "level",
            format!("Cantor level must be at most {MAX_CANTOR_LEVEL}, got {level}"),
        ));
    }
    let denom = 3f64.powi(level as i32);
    let n = 1usize << level;
    let mut coords = Vec::with_capacity(n);
    for word in 0..n as u64 {
        // Digit i of `word` (most significant first) selects the right third.
        let mut numer: u64 = 0;
        for bit in (0..level).rev() {
            numer = numer * 3 + 2 * ((word >> bit) & 1);
        }
        coords.push(numer as f64 / denom);
    }
    PointSet::from_flat(1, coords, format!("cantor-L{level}"))
}

fn max_level(per_step: u64) -> u32 {
    let mut level = 0;
    let mut count = 1u64;
    while count * per_step <= MAX_FRACTAL_POINTS {
        count *= per_step;
        level += 1;
    }
    level
}

/// Lower corners of the surviving cells of a ternary subdivision in `dim`
/// dimensions. `keep` decides from a cell's ternary digits whether it survives.
fn ternary_fractal(
    dim: usize,
    level: u32,
    survivors_per_step: u64,
    keep: impl Fn(&[u32]) -> bool,
    label: String,
) -> Result<PointSet> {
    let limit = max_level(survivors_per_step);
    if level > limit {
        return Err(invalid(
            "level",
            format!("level must be at most {limit} for this fractal, got {level}"),
        ));
    }
    let digits: Vec<Vec<u32>> = (0..3u32.pow(dim as u32))
        .map(|mut code| {
            let mut d = vec![0; dim];
            for slot in d.iter_mut() {
                *slot = code % 3;
                code /= 3;
            }
            d
        })
        .filter(|d| keep(d))
        .collect();
    debug_assert_eq!(digits.len() as u64, survivors_per_step);

    let mut cells: Vec<Vec<u64>> = vec![vec![0; dim]];
    for _ in 0..level {
        let mut next = Vec::with_capacity(cells.len() * digits.len());
        for cell in &cells {
            for d in &digits {
                next.push(cell.iter().zip(d).map(|(c, &di)| 3 * c + di as u64).collect());
            }
        }
        cells = next;
    }
    let denom = 3f64.powi(level as i32);
    let coords = cells
        .into_iter()
        .flat_map(|cell| cell.into_iter().map(move |c| c as f64 / denom))
        .collect();
    PointSet::from_flat(dim, coords, label)
}

/// `8^level` lower corners of the Sierpiński carpet cells in `[0,1]^2`.
pub fn generate_sierpinski_carpet(level: u32) -> Result<PointSet> {
    ternary_fractal(
        2,
        level,
        8,
        |d| !(d[0] == 1 && d[1] == 1),
        format!("carpet-L{level}"),
    )
}

/// `20^level` lower corners of the Menger sponge cells in `[0,1]^3`.
pub fn generate_menger(level: u32) -> Result<PointSet> {
    ternary_fractal(
        3,
        level,
        20,
        |d| d.iter().filter(|&&x| x == 1).count() < 2,
        format!("menger-L{level}"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeierstrassParams {
    pub a: f64,
    pub b: u64,
    pub terms: u32,
}

impl WeierstrassParams {
    /// Series length such that `a^terms < 1e-12`.
    pub fn default_terms(a: f64) -> u32 {
        ((1e-12f64).ln() / a.ln()).floor() as u32 + 1
    }

    pub fn with_base(a: f64, b: u64) -> Self {
        Self {
            a,
            b,
            terms: Self::default_terms(a),
        }
    }
}

impl Default for WeierstrassParams {
    /// `b = 7`, `a = b^(-1/2)`: box dimension `2 + ln a / ln b = 1.5`.
    fn default() -> Self {
        Self::with_base(7f64.powf(-0.5), 7)
    }
}

fn pow_mod(mut base: u128, mut exp: u32, modulus: u128) -> u128 {
    let mut acc = 1 % modulus;
    base %= modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % modulus;
        }
        base = base * base % modulus;
        exp >>= 1;
    }
    acc
}

/// Graph `{(x_i, W(x_i))}` of `W(x) = sum_{n<terms} a^n cos(b^n pi x)` on an
/// equispaced grid of `[0, 1]`.
pub fn generate_weierstrass(num_points: usize, params: WeierstrassParams) -> Result<PointSet> {
    let WeierstrassParams { a, b, terms } = params;
    if num_points == 0 {
        return Err(invalid("num_points", "must be positive"));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(invalid("a", format!("must lie in (0, 1), got {a}")));
    }
    if b < 2 {
        return Err(invalid("b", format!("must be at least 2, got {b}")));
    }
    if a * b as f64 <= 1.0 {
        return Err(invalid("a", format!("need a*b > 1, got {}", a * b as f64)));
    }
    if terms == 0 {
        return Err(invalid("terms", "must be positive"));
    }
    let intervals = num_points.saturating_sub(1).max(1) as u128;
    // x_i = i / intervals; b^n pi x_i is reduced exactly modulo 2 pi.
    let period = 2 * intervals;
    let mut coords = Vec::with_capacity(2 * num_points);
    for i in 0..num_points {
        let mut w = 0.0;
        let mut amp = 1.0;
        for n in 0..terms {
            let phase = pow_mod(b as u128, n, period) * i as u128 % period;
            w += amp * (std::f64::consts::PI * phase as f64 / intervals as f64).cos();
            amp *= a;
        }
        coords.push(i as f64 / intervals as f64);
        coords.push(w);
    }
    PointSet::from_flat(2, coords, format!("weierstrass-a{a}-b{b}"))
}

pub const LORENZ_SIGMA: f64 = 10.0;
pub const LORENZ_RHO: f64 = 28.0;
pub const LORENZ_BETA: f64 = 8.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorenzParams {
    pub dt: f64,
    pub burn_in: usize,
    pub init: [f64; 3],
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            dt: 0.005,
            burn_in: 10_000,
            init: [1.0, 1.0, 1.0],
        }
    }
}

fn lorenz_field(s: [f64; 3]) -> [f64; 3] {
    [
        LORENZ_SIGMA * (s[1] - s[0]),
        s[0] * (LORENZ_RHO - s[2]) - s[1],
        s[0] * s[1] - LORENZ_BETA * s[2],
    ]
}

/// One classical Runge–Kutta step of the Lorenz system.
pub fn lorenz_rk4_step(s: [f64; 3], dt: f64) -> [f64; 3] {
    let shift = |base: [f64; 3], k: [f64; 3], h: f64| {
        [base[0] + h * k[0], base[1] + h * k[1], base[2] + h * k[2]]
    };
    let k1 = lorenz_field(s);
    let k2 = lorenz_field(shift(s, k1, 0.5 * dt));
    let k3 = lorenz_field(shift(s, k2, 0.5 * dt));
    let k4 = lorenz_field(shift(s, k3, dt));
    std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Raw (unscaled) states after each of `steps` RK4 steps from `init`.
pub fn lorenz_trajectory(init: [f64; 3], dt: f64, steps: usize) -> Result<Vec<[f64; 3]>> {
    let mut state = init;
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        state = lorenz_rk4_step(state, dt);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        out.push(state);
    }
    Ok(out)
}

/// Lorenz attractor sample: `burn_in` discarded steps, then `num_points`
/// consecutive states, each coordinate affinely rescaled to `[0, 1]`.
pub fn generate_lorenz(num_points: usize, params: LorenzParams) -> Result<PointSet> {
    if num_points == 0 {
        return Err(invalid("num_points", "must be positive"));
    }
    if !(params.dt > 0.0 && params.dt <= 0.02) {
        return Err(invalid("dt", format!("must lie in (0, 0.02], got {}", params.dt)));
    }
    let states = lorenz_trajectory(params.init, params.dt, params.burn_in + num_points)?;
    let kept = &states[params.burn_in..];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for s in kept {
        for i in 0..3 {
            lo[i] = lo[i].min(s[i]);
            hi[i] = hi[i].max(s[i]);
        }
    }
    let mut coords = Vec::with_capacity(3 * kept.len());
    for s in kept {
        for i in 0..3 {
            let span = hi[i] - lo[i];
            coords.push(if span > 0.0 { (s[i] - lo[i]) / span } else { 0.0 });
        }
    }
    PointSet::from_flat(3, coords, format!("lorenz-dt{}", params.dt))
}

/// `n` i.i.d. uniform points on the unit sphere of `R^d`.
pub fn sample_sphere(n: usize, d: usize, seed: u64) -> Result<PointSet> {
    if d < 2 {
        return Err(invalid("d", format!("must be at least 2, got {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(n * d);
    let mut v = vec![0.0; d];
    for _ in 0..n {
        loop {
            for c in v.iter_mut() {
                *c = StandardNormal.sample(&mut rng);
            }
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1e-150 {
                coords.extend(v.iter().map(|c| c / norm));
                break;
            }
        }
    }
    PointSet::from_flat(d, coords, format!("sphere-d{d}-seed{seed}"))
}
