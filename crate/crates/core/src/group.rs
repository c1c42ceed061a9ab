//! Prime-order subgroups of `Z_p^*` and the arithmetic the scheme needs on
//! top of them.
//!
//! Elements and scalars remember the byte width of their modulus so that
//! they serialize as fixed-width big-endian strings without carrying a
//! reference to the parameters around.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::error::CryptoError;

/// Length in bytes of the digest produced by [`GroupParams::hash_element`].
pub const DIGEST_LEN: usize = 32;

/// Output of the collision-resistant hash `H`.
pub type Digest = [u8; DIGEST_LEN];

const STANDARD_2048_P: &str = "\
843bcc16a8def92a17d1248ec1102322633e2ffa41fdba0b4e59690c1de57c4c\
99f49e2fafec5f7f83bae1aaa04dbe0e0c7f7042cee6d2b3809ba92387744e77\
47dd754d903c560d5aac8547cb8fac755a1fca026d35d56049172f4a656517d0\
f3d7361ca89acb3e545159bf2af56764e558cb10fac4d6b338d08ebb8303b51f\
8e3558fd57b0c4caff31afd784670a30525fdfe16147192943e14d8f5bbebcc9\
c0a3653f405e4674f256fe35db6bc4f66742bd8af1ad430fb1f3b8b466c84c24\
a67dda7771c9a52beeae9ddda1386aad3aa08d00d6b6a79647f236a4d8c9170f\
8086056c1a5f733d5a4bc656396686bff0824a605b6dc4e411adf5279fc13ff7";

const STANDARD_2048_Q: &str = "a3616b2fe9a9952ebb7b791cbabd69f69e67d6f7fcff19ab983e6354391ff46d";

const STANDARD_2048_G: &str = "\
bfdb4ff14f57db24b200924a57fb158e9965f9a63c4041c4174e1f98d7023c2c\
952085b8cf9000df292877211562e9895ecdb23eef64a7c3d0bf0b3e71cf3ff9\
8698f94ec49ccafaf3c3246f97bbd66f776f48b6ae8ddcec89313dd31c249f76\
34f0e30d679da0c40755059703be580b4f7b4da4ffc465af746ec0e6aa5eef1b\
4745e698d56832a434a1d3aed1a0167c9d079d9d106fa93bd988a730005c58d3\
78552c05e95b67757d18f61a95ab9207cc47a0a3662fcaf0f0aa4c8044601363\
be19e066243a5df510bfdf4ec928fd38141c26464cb057771ff993f8cfc52363\
c53ae25f51509b982f5debbe372199e1a0364d7473a2a78881fb0a9bb20a2f4";

/// Parameter-size profiles accepted by `init`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityProfile {
    /// `p = 23`, `q = 11`, `g = 4`. Only useful for hand-checkable examples;
    /// distinct elements collide with probability `1/10`.
    Toy,
    /// 256-bit `p`, 64-bit `q`. Fast enough for exhaustive test sweeps while
    /// keeping PRF collisions negligible.
    Test,
    /// 2048-bit `p`, 256-bit `q`.
    Production,
}

impl SecurityProfile {
    /// Maps a security parameter (bit length of `p`) onto a profile.
    pub fn from_bits(bits: u32) -> Result<Self, CryptoError> {
        match bits {
            5 => Ok(Self::Toy),
            256 => Ok(Self::Test),
            2048 => Ok(Self::Production),
            other => Err(CryptoError::UnsupportedSecurityParameter(other)),
        }
    }

    pub fn modulus_bits(self) -> u64 {
        match self {
            Self::Toy => 5,
            Self::Test => 256,
            Self::Production => 2048,
        }
    }

    pub fn order_bits(self) -> u64 {
        match self {
            Self::Toy => 4,
            Self::Test => 64,
            Self::Production => 256,
        }
    }
}

/// A member of the order-`q` subgroup, stored as an integer in `[1, p)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GroupElement {
    value: BigUint,
    width: usize,
}

/// An integer modulo the subgroup order `q`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Scalar {
    value: BigUint,
    width: usize,
}

impl GroupElement {
    pub fn as_uint(&self) -> &BigUint {
        &self.value
    }

    /// Fixed-width big-endian encoding, `ceil(|p| / 8)` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        fixed_width_bytes(&self.value, self.width)
    }

    /// Parses a fixed-width encoding without any membership check. Use
    /// [`GroupParams::element_from_bytes`] for untrusted input.
    pub fn from_bytes_unchecked(bytes: &[u8]) -> Self {
        GroupElement {
            value: BigUint::from_bytes_be(bytes),
            width: bytes.len(),
        }
    }
}

impl Scalar {
    pub fn as_uint(&self) -> &BigUint {
        &self.value
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        fixed_width_bytes(&self.value, self.width)
    }

    pub fn from_bytes_unchecked(bytes: &[u8]) -> Self {
        Scalar {
            value: BigUint::from_bytes_be(bytes),
            width: bytes.len(),
        }
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", hex::encode(self.to_bytes()))
    }
}

// Scalars are secret more often than not.
impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scalar(..)")
    }
}

fn fixed_width_bytes(value: &BigUint, width: usize) -> Vec<u8> {
    let raw = value.to_bytes_be();
    if raw.len() >= width {
        return raw;
    }
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    out
}

impl Serialize for GroupElement {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for GroupElement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let bytes = crate::wire::hex_bytes(d)?;
        Ok(GroupElement::from_bytes_unchecked(&bytes))
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let bytes = crate::wire::hex_bytes(d)?;
        Ok(Scalar::from_bytes_unchecked(&bytes))
    }
}

/// The public description of the group: modulus `p`, prime order `q` of the
/// subgroup and its generator `g`.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    modulus: BigUint,
    order: BigUint,
    generator: BigUint,
    element_len: usize,
    scalar_len: usize,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("modulus_bits", &self.modulus.bits())
            .field("order_bits", &self.order.bits())
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct GroupParamsRepr {
    p: String,
    q: String,
    g: String,
}

impl Serialize for GroupParams {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GroupParamsRepr {
            p: self.modulus.to_str_radix(16),
            q: self.order.to_str_radix(16),
            g: self.generator.to_str_radix(16),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = GroupParamsRepr::deserialize(d)?;
        let parse = |s: &str| {
            BigUint::parse_bytes(s.as_bytes(), 16).ok_or_else(|| D::Error::custom("bad hex integer"))
        };
        GroupParams::new(parse(&repr.p)?, parse(&repr.q)?, parse(&repr.g)?)
            .map_err(D::Error::custom)
    }
}

impl GroupParams {
    /// Validates and wraps `(p, q, g)`.
    pub fn new(modulus: BigUint, order: BigUint, generator: BigUint) -> Result<Self, CryptoError> {
        let one = BigUint::one();
        if modulus <= BigUint::from(3u8) || order <= one {
            return Err(CryptoError::InvalidGroup("modulus and order too small"));
        }
        if !((&modulus - &one) % &order).is_zero() {
            return Err(CryptoError::InvalidGroup("q does not divide p - 1"));
        }
        if !is_probable_prime(&modulus, 32) || !is_probable_prime(&order, 32) {
            return Err(CryptoError::InvalidGroup("p or q is composite"));
        }
        if generator <= one || generator >= modulus {
            return Err(CryptoError::InvalidGroup("generator out of range"));
        }
        // q prime and g != 1, so g^q = 1 pins the order to exactly q.
        if generator.modpow(&order, &modulus) != one {
            return Err(CryptoError::InvalidGroup("generator does not have order q"));
        }
        let element_len = byte_len(&modulus);
        let scalar_len = byte_len(&order);
        Ok(GroupParams {
            modulus,
            order,
            generator,
            element_len,
            scalar_len,
        })
    }

    /// The hand-sized group `p = 23, q = 11, g = 4`.
    pub fn toy() -> Self {
        Self::new(23u8.into(), 11u8.into(), 4u8.into()).expect("toy group is valid")
    }

    /// A fixed 2048-bit modulus with a 256-bit prime-order subgroup, generated
    /// once offline. Saves the several seconds a fresh production group takes.
    pub fn standard_2048() -> Self {
        let parse = |s: &str| BigUint::parse_bytes(s.as_bytes(), 16).expect("constant is hex");
        Self::new(
            parse(STANDARD_2048_P),
            parse(STANDARD_2048_Q),
            parse(STANDARD_2048_G),
        )
        .expect("standard group is valid")
    }

    /// Draws a fresh group of the requested size: a random prime `q`, then
    /// `p = k·q + 1` prime, then `g = a^((p-1)/q) != 1`.
    pub fn generate<R: RngCore + CryptoRng>(
        modulus_bits: u64,
        order_bits: u64,
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        if order_bits < 8 || modulus_bits <= order_bits + 1 {
            return Err(CryptoError::UnsupportedSecurityParameter(modulus_bits as u32));
        }
        let order = random_prime(order_bits, rng);
        let cofactor_bits = modulus_bits - order_bits;
        let one = BigUint::one();
        let modulus = loop {
            let mut k = rng.gen_biguint(cofactor_bits);
            k.set_bit(cofactor_bits - 1, true);
            k.set_bit(0, false);
            let candidate = &k * &order + &one;
            if candidate.bits() == modulus_bits && is_probable_prime(&candidate, 40) {
                break candidate;
            }
        };
        let exp = (&modulus - &one) / &order;
        let mut base = BigUint::from(2u8);
        let generator = loop {
            let g = base.modpow(&exp, &modulus);
            if g != one {
                break g;
            }
            base += 1u8;
        };
        Self::new(modulus, order, generator)
    }

    pub fn for_profile<R: RngCore + CryptoRng>(
        profile: SecurityProfile,
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        match profile {
            SecurityProfile::Toy => Ok(Self::toy()),
            p => Self::generate(p.modulus_bits(), p.order_bits(), rng),
        }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn order(&self) -> &BigUint {
        &self.order
    }

    pub fn generator(&self) -> GroupElement {
        self.wrap(self.generator.clone())
    }

    pub fn element_len(&self) -> usize {
        self.element_len
    }

    pub fn scalar_len(&self) -> usize {
        self.scalar_len
    }

    fn wrap(&self, value: BigUint) -> GroupElement {
        GroupElement {
            value,
            width: self.element_len,
        }
    }

    /// Reduces an arbitrary integer modulo `q`.
    pub fn scalar(&self, value: BigUint) -> Scalar {
        Scalar {
            value: value % &self.order,
            width: self.scalar_len,
        }
    }

    pub fn scalar_from_u64(&self, value: u64) -> Scalar {
        self.scalar(BigUint::from(value))
    }

    /// Uniform in `[1, q-1]`.
    pub fn random_nonzero_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        let value = rng.gen_biguint_range(&BigUint::one(), &self.order);
        self.scalar(value)
    }

    pub fn add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        self.scalar(&a.value + &b.value)
    }

    pub fn sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        self.scalar(&a.value + &self.order - &b.value % &self.order)
    }

    pub fn mul_scalar(&self, a: &Scalar, b: &Scalar) -> Scalar {
        self.scalar(&a.value * &b.value)
    }

    pub fn neg(&self, a: &Scalar) -> Scalar {
        self.sub(&self.scalar(BigUint::zero()), a)
    }

    /// `g^e`
    pub fn pow_g(&self, exp: &Scalar) -> GroupElement {
        self.wrap(self.generator.modpow(&exp.value, &self.modulus))
    }

    /// `base^e`
    pub fn pow(&self, base: &GroupElement, exp: &Scalar) -> GroupElement {
        self.wrap(base.value.modpow(&exp.value, &self.modulus))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.wrap((&a.value * &b.value) % &self.modulus)
    }

    /// Multiplicative inverse; inputs are subgroup members so never zero.
    pub fn invert(&self, a: &GroupElement) -> GroupElement {
        // a^(q-1) = a^-1 inside the order-q subgroup, but the extended gcd is
        // far cheaper than a full exponentiation.
        let p = num_bigint::BigInt::from(self.modulus.clone());
        let x = num_bigint::BigInt::from(a.value.clone());
        let egcd = x.extended_gcd(&p);
        let inv = egcd.x.mod_floor(&p);
        self.wrap(inv.to_biguint().expect("mod_floor is non-negative"))
    }

    /// `1 <= v < p` and `v^q = 1 (mod p)`.
    pub fn is_member(&self, value: &BigUint) -> bool {
        !value.is_zero()
            && value < &self.modulus
            && value.modpow(&self.order, &self.modulus) == BigUint::one()
    }

    /// Re-checks an element that came from outside, normalising its width.
    pub fn validate(&self, element: &GroupElement) -> Result<GroupElement, CryptoError> {
        if element.width != self.element_len {
            return Err(CryptoError::MalformedElement("wrong encoding width"));
        }
        if !self.is_member(&element.value) {
            return Err(CryptoError::MalformedElement("not a member of the order-q subgroup"));
        }
        Ok(self.wrap(element.value.clone()))
    }

    pub fn element_from_uint(&self, value: BigUint) -> Result<GroupElement, CryptoError> {
        if !self.is_member(&value) {
            return Err(CryptoError::MalformedElement("not a member of the order-q subgroup"));
        }
        Ok(self.wrap(value))
    }

    pub fn element_from_bytes(&self, bytes: &[u8]) -> Result<GroupElement, CryptoError> {
        self.validate(&GroupElement::from_bytes_unchecked(bytes))
    }

    /// Checks a scalar parsed from outside: right width, reduced, and (if
    /// `nonzero`) not zero.
    pub fn validate_scalar(&self, s: &Scalar, nonzero: bool) -> Result<Scalar, CryptoError> {
        if s.width != self.scalar_len || s.value >= self.order {
            return Err(CryptoError::MalformedScalar);
        }
        if nonzero && s.value.is_zero() {
            return Err(CryptoError::MalformedScalar);
        }
        Ok(self.scalar(s.value.clone()))
    }

    /// `H`: SHA-256 over the fixed-width big-endian encoding.
    pub fn hash_element(&self, element: &GroupElement) -> Digest {
        let mut h = Sha256::new();
        h.update(fixed_width_bytes(&element.value, self.element_len));
        h.finalize().into()
    }
}

fn byte_len(v: &BigUint) -> usize {
    v.bits().div_ceil(8) as usize
}

const SMALL_PRIMES: [u32; 30] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113,
];

/// Miller–Rabin with `rounds` random bases after trial division.
pub fn is_probable_prime(n: &BigUint, rounds: usize) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u8);
    if n < &two {
        return false;
    }
    for &sp in SMALL_PRIMES.iter() {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - &one;
    let mut d = n_minus_one.clone();
    let mut s = 0u64;
    while d.is_even() {
        d >>= 1;
        s += 1;
    }
    let mut rng = rand::thread_rng();
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
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

fn random_prime<R: RngCore + CryptoRng>(bits: u64, rng: &mut R) -> BigUint {
    loop {
        let mut c = rng.gen_biguint(bits);
        c.set_bit(bits - 1, true);
        c.set_bit(0, true);
        if is_probable_prime(&c, 40) {
            return c;
        }
    }
}
