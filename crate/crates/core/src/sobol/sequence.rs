//! Sobol' low-discrepancy sequence in base 2 (Gray-code construction).
//!
//! The first ten dimensions use the standard direction-number table; higher
//! dimensions (the parameter studies need ~100) derive from generated
//! primitive polynomials over GF(2) with seeded odd initial direction
//! numbers. Sequence quality is validated downstream by the analytic
//! Ishigami oracle.

use rand::Rng;

use crate::seed::SeedTree;

const BITS: u32 = 52;

/// (degree, interior coefficient bits, initial direction numbers) for the
/// classic low dimensions. Dimension 0 is the van der Corput sequence.
const KNOWN: &[(u32, u64, &[u64])] = &[
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
];

/// Polynomial multiplication modulo `poly` over GF(2). `poly` includes the
/// leading bit of degree `d`.
fn gf2_mulmod(mut a: u64, mut b: u64, poly: u64, d: u32) -> u64 {
    let mut acc = 0u64;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if (a >> d) & 1 == 1 {
            a ^= poly;
        }
    }
    acc
}

fn gf2_powmod(mut base: u64, mut e: u64, poly: u64, d: u32) -> u64 {
    let mut acc = 1u64;
    while e > 0 {
        if e & 1 == 1 {
            acc = gf2_mulmod(acc, base, poly, d);
        }
        base = gf2_mulmod(base, base, poly, d);
        e >>= 1;
    }
    acc
}

/// Prime factors of 2^d - 1 for the degrees we generate.
fn mersenne_factors(d: u32) -> &'static [u64] {
    match d {
        1 => &[1],
        2 => &[3],
        3 => &[7],
        4 => &[3, 5],
        5 => &[31],
        6 => &[3, 7],
        7 => &[127],
        8 => &[3, 5, 17],
        9 => &[7, 73],
        10 => &[3, 11, 31],
        11 => &[23, 89],
        12 => &[3, 5, 7, 13],
        13 => &[8191],
        _ => panic!("degree {d} beyond the generated table"),
    }
}

/// Primitivity test for a degree-`d` polynomial with full bit mask `poly`.
fn is_primitive(poly: u64, d: u32) -> bool {
    if d == 0 {
        return false;
    }
    let order = (1u64 << d) - 1;
    // x^order must be 1 ...
    if gf2_powmod(0b10, order, poly, d) != 1 {
        return false;
    }
    // ... and no proper divisor order may collapse to 1.
    for q in mersenne_factors(d) {
        if *q == 1 {
            continue;
        }
        if gf2_powmod(0b10, order / q, poly, d) == 1 {
            return false;
        }
    }
    true
}

/// Enumerate primitive polynomials (degree, interior coefficient bits) in
/// increasing degree order, skipping the ones already used by the known
/// table.
fn generated_polynomials(count: usize) -> Vec<(u32, u64)> {
    let used: Vec<(u32, u64)> = KNOWN.iter().map(|(d, a, _)| (*d, *a)).collect();
    let mut out = Vec::with_capacity(count);
    let mut degree = 1u32;
    while out.len() < count {
        let interior_max = 1u64 << (degree.saturating_sub(1));
        for a in 0..interior_max {
            let poly = (1u64 << degree) | (a << 1) | 1;
            if is_primitive(poly, degree) && !used.contains(&(degree, a)) {
                out.push((degree, a));
                if out.len() == count {
                    break;
                }
            }
        }
        degree += 1;
        assert!(degree <= 13, "too many dimensions requested");
    }
    out
}

/// Direction numbers for one dimension.
fn direction_numbers(degree: u32, interior: u64, init: &[u64]) -> Vec<u64> {
    let s = degree as usize;
    let mut m = vec![0u64; BITS as usize];
    for (k, mk) in init.iter().enumerate().take(s.min(BITS as usize)) {
        debug_assert!(mk % 2 == 1 && *mk < (2u64 << k));
        m[k] = *mk;
    }
    for k in s..BITS as usize {
        let mut val = m[k - s] ^ (m[k - s] << s);
        for j in 1..s {
            let a_j = (interior >> (s - 1 - j)) & 1;
            if a_j == 1 {
                val ^= m[k - j] << j;
            }
        }
        m[k] = val;
    }
    (0..BITS as usize)
        .map(|k| m[k] << (BITS as usize - 1 - k))
        .collect()
}

/// Gray-code Sobol' generator over `dims` dimensions.
pub struct SobolSequence {
    directions: Vec<Vec<u64>>,
    state: Vec<u64>,
    index: u64,
}

impl SobolSequence {
    /// Build a generator. Dimensions beyond the known table draw their
    /// initial direction numbers from the seed.
    pub fn new(dims: usize, seed: &SeedTree) -> Self {
        let mut directions = Vec::with_capacity(dims);
        // Dimension 0: van der Corput.
        if dims > 0 {
            directions.push(
                (0..BITS as usize)
                    .map(|k| 1u64 << (BITS as usize - 1 - k))
                    .collect(),
            );
        }
        for dim in 1..dims {
            if dim - 1 < KNOWN.len() {
                let (d, a, init) = KNOWN[dim - 1];
                directions.push(direction_numbers(d, a, init));
            } else {
                break;
            }
        }
        if dims > KNOWN.len() + 1 {
            let extra = generated_polynomials(dims - KNOWN.len() - 1);
            let init_seed = seed.child("sobol-init");
            for (i, (d, a)) in extra.iter().enumerate() {
                let mut rng = init_seed.index(i as u64).rng();
                let init: Vec<u64> = (0..*d as usize)
                    .map(|k| {
                        let bound = 1u64 << k;
                        2 * rng.random_range(0..bound.max(1)) + 1
                    })
                    .collect();
                directions.push(direction_numbers(*d, *a, &init));
            }
        }
        SobolSequence {
            directions,
            state: vec![0; dims],
            index: 0,
        }
    }

    pub fn dims(&self) -> usize {
        self.state.len()
    }

    /// Next point in [0, 1)^dims.
    pub fn next_point(&mut self) -> Vec<f64> {
        // Gray-code update: flip the direction of the lowest zero bit of the
        // running index.
        let c = self.index.trailing_ones() as usize;
        self.index += 1;
        let scale = 1.0 / (1u64 << BITS) as f64;
        for (dim, x) in self.state.iter_mut().enumerate() {
            *x ^= self.directions[dim][c.min(BITS as usize - 1)];
            let _ = dim;
        }
        self.state.iter().map(|x| *x as f64 * scale).collect()
    }

    /// Skip ahead (the all-zeros first point is conventionally dropped).
    pub fn skip(&mut self, n: usize) {
        for _ in 0..n {
            self.next_point();
        }
    }
}
