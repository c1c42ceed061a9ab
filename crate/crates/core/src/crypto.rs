//! Multi-user searchable encryption with split keys.
//!
//! The trusted authority holds `x`; every user `i` holds `x_i1` and the
//! server holds `x_i2 = x - x_i1 (mod q)`. Elements are encrypted in two
//! rounds (client, then server) and queried with trapdoors that are also
//! completed in two rounds. After the server round every ciphertext and
//! trapdoor lives under the common key `x`, whoever produced it, so the
//! server can test equality without learning the element.

use std::fmt;

use hmac::{Hmac, KeyInit, Mac};
use num_bigint::BigUint;
use num_traits::Zero;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::error::CryptoError;
use crate::group::{Digest, GroupElement, GroupParams, Scalar, SecurityProfile, DIGEST_LEN};
use crate::ids::UserId;
use crate::metrics;
use crate::wire::{self, Reader, WireEncode, Writer};

pub const HASH_ID: &str = "sha256";
pub const PRF_ID: &str = "hmac-sha256";
pub const PRF_KEY_LEN: usize = 32;

/// Key of the pseudorandom function `f`, shared by every client key set.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrfKey(#[serde(with = "wire::hex_array")] [u8; PRF_KEY_LEN]);

impl PrfKey {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; PRF_KEY_LEN];
        rng.fill_bytes(&mut k);
        PrfKey(k)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; PRF_KEY_LEN] = bytes.try_into().map_err(|_| CryptoError::BadPrfKey {
            expected: PRF_KEY_LEN,
            actual: bytes.len(),
        })?;
        Ok(PrfKey(arr))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for PrfKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrfKey(..)")
    }
}

/// `(G, g, q, h, H, f)`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicParams {
    pub group: GroupParams,
    /// `h = g^x`
    pub blinded_generator: GroupElement,
    pub hash_id: String,
    pub prf_id: String,
}

impl PublicParams {
    /// Re-checks everything after deserialization.
    pub fn validate(&self) -> Result<(), CryptoError> {
        let h = self.group.validate(&self.blinded_generator)?;
        if h.as_uint() == &BigUint::from(1u8) {
            return Err(CryptoError::InvalidGroup("h is the identity"));
        }
        if self.hash_id != HASH_ID || self.prf_id != PRF_ID {
            return Err(CryptoError::InvalidGroup("unknown hash or prf identifier"));
        }
        Ok(())
    }
}

/// `(x, s)`
#[derive(Clone, Serialize, Deserialize)]
pub struct MasterSecret {
    pub master_exponent: Scalar,
    pub prf_key: PrfKey,
}

impl fmt::Debug for MasterSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MasterSecret(..)")
    }
}

impl MasterSecret {
    /// Whether an issued pair splits this secret: `x_i1 + x_i2 = x (mod q)`.
    pub fn is_split_by(&self, params: &PublicParams, client: &ClientKeySet, server: &ServerKeySet) -> bool {
        params.group.add(&client.client_exponent, &server.server_exponent) == self.master_exponent
    }
}

/// `K_u = (x_i1, s)`, the user's private half.
#[derive(Clone, Serialize, Deserialize)]
pub struct ClientKeySet {
    pub user_id: UserId,
    pub client_exponent: Scalar,
    pub prf_key: PrfKey,
}

impl fmt::Debug for ClientKeySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClientKeySet").field("user_id", &self.user_id).finish_non_exhaustive()
    }
}

/// `K_s = (i, x_i2)`, held by the server's Key Store.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerKeySet {
    pub user_id: UserId,
    pub server_exponent: Scalar,
}

impl fmt::Debug for ServerKeySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServerKeySet").field("user_id", &self.user_id).finish_non_exhaustive()
    }
}

/// First-round ciphertext `(g^(r+σ), ĉ1^(x_i1), H(h^r))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientCiphertext {
    pub c1_hat: GroupElement,
    pub c2_hat: GroupElement,
    #[serde(with = "wire::hex_array")]
    pub c3_hat: Digest,
}

/// Stored ciphertext `(h^(r+σ), H(h^r))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServerCiphertext {
    pub c1: GroupElement,
    #[serde(with = "wire::hex_array")]
    pub c2: Digest,
}

/// First-round trapdoor `(g^(σ-r), g^(x_i2·r + x_i1·σ))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientTrapdoor {
    pub t1: GroupElement,
    pub t2: GroupElement,
}

/// Completed trapdoor `g^(x·σ)`; the client randomness has cancelled out.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServerTrapdoor {
    pub value: GroupElement,
}

/// A server trapdoor with its inverse precomputed, for scanning lists.
#[derive(Debug, Clone)]
pub struct PreparedTrapdoor {
    inverse: GroupElement,
}

impl ServerTrapdoor {
    pub fn prepare(&self, params: &PublicParams) -> PreparedTrapdoor {
        PreparedTrapdoor {
            inverse: params.group.invert(&self.value),
        }
    }
}

/// System setup for one of the named parameter profiles.
pub fn init<R: RngCore + CryptoRng>(
    profile: SecurityProfile,
    rng: &mut R,
) -> Result<(PublicParams, MasterSecret), CryptoError> {
    let group = GroupParams::for_profile(profile, rng)?;
    Ok(init_with_group(group, rng))
}

/// System setup from a security parameter given as the bit length of `p`.
pub fn init_from_bits<R: RngCore + CryptoRng>(
    bits: u32,
    rng: &mut R,
) -> Result<(PublicParams, MasterSecret), CryptoError> {
    init(SecurityProfile::from_bits(bits)?, rng)
}

/// System setup over an existing group: fresh `x` and PRF key.
pub fn init_with_group<R: RngCore + CryptoRng>(group: GroupParams, rng: &mut R) -> (PublicParams, MasterSecret) {
    let x = group.random_nonzero_scalar(rng);
    let prf_key = PrfKey::random(rng);
    setup_with_secret(group, x, prf_key).expect("random x is nonzero")
}

/// Builds the parameters for a chosen `x`.
pub fn setup_with_secret(
    group: GroupParams,
    master_exponent: Scalar,
    prf_key: PrfKey,
) -> Result<(PublicParams, MasterSecret), CryptoError> {
    let master_exponent = group.scalar(master_exponent.as_uint().clone());
    if master_exponent.is_zero() {
        return Err(CryptoError::MalformedScalar);
    }
    let blinded_generator = group.pow_g(&master_exponent);
    let params = PublicParams {
        group,
        blinded_generator,
        hash_id: HASH_ID.to_owned(),
        prf_id: PRF_ID.to_owned(),
    };
    Ok((params, MasterSecret { master_exponent, prf_key }))
}

/// Issues a split key pair with a fresh uniformly random `x_i1`.
pub fn keygen<R: RngCore + CryptoRng>(
    msk: &MasterSecret,
    user_id: &UserId,
    params: &PublicParams,
    rng: &mut R,
) -> (ClientKeySet, ServerKeySet) {
    let x_i1 = params.group.random_nonzero_scalar(rng);
    split_key(msk, user_id, params, x_i1)
}

/// Deterministic half of [`keygen`]: `x_i2 = x - x_i1`.
pub fn split_key(
    msk: &MasterSecret,
    user_id: &UserId,
    params: &PublicParams,
    client_exponent: Scalar,
) -> (ClientKeySet, ServerKeySet) {
    let server_exponent = params.group.sub(&msk.master_exponent, &client_exponent);
    (
        ClientKeySet {
            user_id: user_id.clone(),
            client_exponent,
            prf_key: msk.prf_key.clone(),
        },
        ServerKeySet {
            user_id: user_id.clone(),
            server_exponent,
        },
    )
}

/// `σ_e = f_s(e)`, in `[1, q-1]`.
///
/// HMAC-SHA256 in counter mode is expanded to `|q| + 128` bits and reduced
/// mod `q`; a zero result is re-drawn with the next counter.
pub fn prf_eval(key: &PrfKey, params: &PublicParams, element: &str) -> Result<Scalar, CryptoError> {
    if element.is_empty() {
        return Err(CryptoError::EmptyElement);
    }
    let q = params.group.order();
    let blocks = (q.bits() as usize + 128).div_ceil(256);
    for attempt in 0u32.. {
        let mut wide = Vec::with_capacity(blocks * 32);
        for block in 0..blocks as u32 {
            let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(key.as_bytes()).expect("hmac accepts any key length");
            mac.update(b"sigma");
            mac.update(&attempt.to_be_bytes());
            mac.update(&block.to_be_bytes());
            mac.update(element.as_bytes());
            wide.extend_from_slice(&mac.finalize().into_bytes());
        }
        let v = BigUint::from_bytes_be(&wide) % q;
        if !v.is_zero() {
            return Ok(params.group.scalar(v));
        }
    }
    unreachable!("counter space exhausted")
}

/// First-round encryption of `element` by the holder of `keyset`.
pub fn client_encrypt<R: RngCore + CryptoRng>(
    params: &PublicParams,
    keyset: &ClientKeySet,
    element: &str,
    rng: &mut R,
) -> Result<ClientCiphertext, CryptoError> {
    let sigma = prf_eval(&keyset.prf_key, params, element)?;
    let r = params.group.random_nonzero_scalar(rng);
    Ok(client_encrypt_with(params, keyset, &sigma, &r))
}

/// [`client_encrypt`] with explicit `σ` and nonce `r`. The nonce must never
/// be reused; this exists for known-answer tests.
pub fn client_encrypt_with(
    params: &PublicParams,
    keyset: &ClientKeySet,
    sigma: &Scalar,
    r: &Scalar,
) -> ClientCiphertext {
    let g = &params.group;
    let c1_hat = g.pow_g(&g.add(r, sigma));
    let c2_hat = g.pow(&c1_hat, &keyset.client_exponent);
    let c3_hat = g.hash_element(&g.pow(&params.blinded_generator, r));
    metrics::record(|c| c.client_encrypt += 1);
    ClientCiphertext { c1_hat, c2_hat, c3_hat }
}

/// Second-round encryption: `c1 = ĉ1^(x_i2)·ĉ2 = h^(r+σ)`, `c2 = ĉ3`.
pub fn server_reencrypt(
    params: &PublicParams,
    ct: &ClientCiphertext,
    skey: &ServerKeySet,
) -> Result<ServerCiphertext, CryptoError> {
    let g = &params.group;
    let c1_hat = g.validate(&ct.c1_hat)?;
    let c2_hat = g.validate(&ct.c2_hat)?;
    let c1 = g.mul(&g.pow(&c1_hat, &skey.server_exponent), &c2_hat);
    metrics::record(|c| c.server_reencrypt += 1);
    Ok(ServerCiphertext { c1, c2: ct.c3_hat })
}

/// First-round trapdoor for `element`.
pub fn client_trapdoor<R: RngCore + CryptoRng>(
    params: &PublicParams,
    keyset: &ClientKeySet,
    element: &str,
    rng: &mut R,
) -> Result<ClientTrapdoor, CryptoError> {
    let sigma = prf_eval(&keyset.prf_key, params, element)?;
    let r = params.group.random_nonzero_scalar(rng);
    Ok(client_trapdoor_with(params, keyset, &sigma, &r))
}

/// [`client_trapdoor`] with explicit `σ` and nonce `r`.
pub fn client_trapdoor_with(
    params: &PublicParams,
    keyset: &ClientKeySet,
    sigma: &Scalar,
    r: &Scalar,
) -> ClientTrapdoor {
    let g = &params.group;
    let sigma_minus_r = g.sub(sigma, r);
    let t1 = g.pow_g(&sigma_minus_r);
    // h^r · g^(-x_i1·r) · g^(x_i1·σ) = h^r · g^(x_i1·(σ - r))
    let t2 = g.mul(
        &g.pow(&params.blinded_generator, r),
        &g.pow_g(&g.mul_scalar(&keyset.client_exponent, &sigma_minus_r)),
    );
    metrics::record(|c| c.client_trapdoor += 1);
    ClientTrapdoor { t1, t2 }
}

/// Second-round trapdoor: `T = t1^(x_i2)·t2 = g^(x·σ)`.
pub fn server_trapdoor(
    params: &PublicParams,
    td: &ClientTrapdoor,
    skey: &ServerKeySet,
) -> Result<ServerTrapdoor, CryptoError> {
    let g = &params.group;
    let t1 = g.validate(&td.t1)?;
    let t2 = g.validate(&td.t2)?;
    let value = g.mul(&g.pow(&t1, &skey.server_exponent), &t2);
    metrics::record(|c| c.server_trapdoor += 1);
    Ok(ServerTrapdoor { value })
}

/// `c2 == H(c1 · T^-1)`
pub fn match_element(params: &PublicParams, ct: &ServerCiphertext, td: &ServerTrapdoor) -> bool {
    match_prepared(params, ct, &td.prepare(params))
}

/// [`match_element`] with the trapdoor inverse already computed.
pub fn match_prepared(params: &PublicParams, ct: &ServerCiphertext, td: &PreparedTrapdoor) -> bool {
    let g = &params.group;
    metrics::record(|c| c.matches += 1);
    g.hash_element(&g.mul(&ct.c1, &td.inverse)) == ct.c2
}

fn digest_from(bytes: &[u8]) -> Result<Digest, CryptoError> {
    bytes
        .try_into()
        .map_err(|_| CryptoError::Decode("digest must be 32 bytes"))
}

impl WireEncode for ClientCiphertext {
    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.field(&self.c1_hat.to_bytes())
            .field(&self.c2_hat.to_bytes())
            .field(&self.c3_hat);
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes);
        let c1_hat = GroupElement::from_bytes_unchecked(r.field()?);
        let c2_hat = GroupElement::from_bytes_unchecked(r.field()?);
        let c3_hat = digest_from(r.field()?)?;
        r.finish()?;
        Ok(ClientCiphertext { c1_hat, c2_hat, c3_hat })
    }
}

impl WireEncode for ServerCiphertext {
    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.field(&self.c1.to_bytes()).field(&self.c2);
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes);
        let c1 = GroupElement::from_bytes_unchecked(r.field()?);
        let c2 = digest_from(r.field()?)?;
        r.finish()?;
        Ok(ServerCiphertext { c1, c2 })
    }
}

impl WireEncode for ClientTrapdoor {
    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.field(&self.t1.to_bytes()).field(&self.t2.to_bytes());
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes);
        let t1 = GroupElement::from_bytes_unchecked(r.field()?);
        let t2 = GroupElement::from_bytes_unchecked(r.field()?);
        r.finish()?;
        Ok(ClientTrapdoor { t1, t2 })
    }
}

impl WireEncode for ServerTrapdoor {
    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.field(&self.value.to_bytes());
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes);
        let value = GroupElement::from_bytes_unchecked(r.field()?);
        r.finish()?;
        Ok(ServerTrapdoor { value })
    }
}

impl WireEncode for ServerKeySet {
    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.field(self.user_id.as_str().as_bytes())
            .field(&self.server_exponent.to_bytes());
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes);
        let user_id = std::str::from_utf8(r.field()?)
            .map_err(|_| CryptoError::Decode("user id is not utf-8"))?;
        let server_exponent = Scalar::from_bytes_unchecked(r.field()?);
        r.finish()?;
        Ok(ServerKeySet {
            user_id: UserId::new(user_id),
            server_exponent,
        })
    }
}

impl WireEncode for ClientKeySet {
    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.field(self.user_id.as_str().as_bytes())
            .field(&self.client_exponent.to_bytes())
            .field(self.prf_key.as_bytes());
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes);
        let user_id = std::str::from_utf8(r.field()?)
            .map_err(|_| CryptoError::Decode("user id is not utf-8"))?;
        let client_exponent = Scalar::from_bytes_unchecked(r.field()?);
        let prf_key = PrfKey::from_slice(r.field()?)?;
        r.finish()?;
        Ok(ClientKeySet {
            user_id: UserId::new(user_id),
            client_exponent,
            prf_key,
        })
    }
}

const _: () = assert!(DIGEST_LEN == 32);
