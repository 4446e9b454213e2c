//! Number-theoretic helpers over arbitrary-precision integers.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Fixed Miller-Rabin witnesses. The first thirteen primes make the test
/// deterministic below 3.3 * 10^24; the rest tighten larger inputs.
const WITNESSES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

pub fn is_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &w in &WITNESSES {
        let w = BigUint::from(w);
        if n == &w {
            return true;
        }
        if (n % &w).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'witness: for &w in &WITNESSES {
        let mut x = BigUint::from(w).modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

pub fn is_prime_u64(n: u64) -> bool {
    is_prime(&BigUint::from(n))
}

/// Smallest prime strictly greater than `n`.
pub fn next_prime_above(n: &BigUint) -> BigUint {
    let mut c = n + 1u32;
    if c <= BigUint::from(2u32) {
        return BigUint::from(2u32);
    }
    if c.is_even() {
        c += 1u32;
    }
    while !is_prime(&c) {
        c += 2u32;
    }
    c
}

/// All primes `<= bound`, by sieve.
pub fn primes_up_to(bound: u64) -> Vec<u64> {
    if bound < 2 {
        return Vec::new();
    }
    let n = bound as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

pub fn primorial(bound: u64) -> BigUint {
    primes_up_to(bound)
        .into_iter()
        .fold(BigUint::one(), |acc, p| acc * p)
}

pub fn gcd(a: &BigUint, b: &BigUint) -> BigUint {
    a.gcd(b)
}

/// Inverse of `a` modulo `n`, if it exists.
pub fn mod_inverse(a: &BigUint, n: &BigUint) -> Option<BigUint> {
    if n.is_one() {
        return Some(BigUint::zero());
    }
    let a = BigInt::from(a % n);
    let n_signed = BigInt::from(n.clone());
    let egcd = a.extended_gcd(&n_signed);
    if !egcd.gcd.is_one() {
        return None;
    }
    egcd.x.mod_floor(&n_signed).to_biguint()
}

/// `base^exp mod n` for a signed exponent; a negative exponent uses the
/// inverse of `base` and returns `None` when it does not exist.
pub fn mod_pow_signed(base: &BigUint, exp: &BigInt, n: &BigUint) -> Option<BigUint> {
    let mag = exp.magnitude();
    match exp.sign() {
        Sign::Minus => mod_inverse(base, n).map(|inv| inv.modpow(mag, n)),
        _ => Some(base.modpow(mag, n)),
    }
}

/// Jacobi symbol `(a / n)` for odd positive `n`.
pub fn jacobi(a: &BigUint, n: &BigUint) -> i8 {
    assert!(n.is_odd(), "jacobi symbol needs an odd modulus");
    let mut a = a % n;
    let mut n = n.clone();
    let mut result = 1i8;
    while !a.is_zero() {
        let tz = a.trailing_zeros().unwrap_or(0);
        a >>= tz;
        let n_mod_8 = (&n % 8u32).to_u32().unwrap();
        if tz % 2 == 1 && (n_mod_8 == 3 || n_mod_8 == 5) {
            result = -result;
        }
        std::mem::swap(&mut a, &mut n);
        if (&a % 4u32).to_u32() == Some(3) && (&n % 4u32).to_u32() == Some(3) {
            result = -result;
        }
        a %= &n;
    }
    if n.is_one() {
        result
    } else {
        0
    }
}

/// Floor division toward negative infinity.
pub fn floor_div(a: &BigInt, b: &BigInt) -> BigInt {
    a.div_floor(b)
}

pub fn to_signed(v: &BigUint) -> BigInt {
    BigInt::from(v.clone())
}

/// Non-negative residue of a signed integer.
pub fn residue(v: &BigInt, n: &BigUint) -> BigUint {
    v.mod_floor(&BigInt::from(n.clone()))
        .to_biguint()
        .expect("mod_floor of a positive modulus is non-negative")
}

/// Trial-factors `n` completely. Only meant for desk-scale test oracles.
pub fn factorize(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut n = n;
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        while n % d == 0 {
            out.push(d);
            n /= d;
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

pub fn is_negative(v: &BigInt) -> bool {
    v.is_negative()
}
