//! Allowlist authentication for collaboration peers.
//!
//! An [`Authority`] issues signed [`AccessToken`]s to allowlisted users. Every
//! request carries the sender's token, the recipient's public key, a timestamp
//! and a fresh nonce, all signed with the sender's key; responses echo the
//! nonce. [`validate_request`] applies its rules in a fixed order and reports
//! the first one that fails:
//!
//! 1. the sender's token is signed by the authority and not expired,
//! 2. the request signature verifies under the key in that token,
//! 3. the request time is within `N` seconds of local time,
//! 4. the nonce was not seen in the last `2N` seconds,
//! 5. the request is addressed to this peer's public key.
//!
//! Signature primitives are pluggable through [`KeyPair`] and [`Verifier`].
//! [`ToyScheme`] is deterministic and insecure, meant for tests; the
//! `ed25519` feature adds a real scheme.
//!
//! Signed material and wire frames use the same encoding: each field is a
//! 4-byte big-endian length followed by its bytes, in declaration order.
//! Timestamps are Unix seconds encoded as 8-byte big-endian signed integers.

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;

use rand::RngCore;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default clock-skew window `N`, in seconds.
pub const DEFAULT_WINDOW: i64 = 60;
pub const NONCE_LEN: usize = 16;

pub trait KeyPair: Send + Sync {
    fn public_key(&self) -> Vec<u8>;
    fn sign(&self, message: &[u8]) -> Vec<u8>;
}

pub trait Verifier: Send + Sync {
    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool;
}

/// Hash-based stand-in for a signature scheme. The signature is
/// `SHA-256(public key || message)`, so anyone who knows the public key can
/// forge it. It exercises the protocol logic and nothing more.
#[derive(Clone, Copy, Debug, Default)]
pub struct ToyScheme;

#[derive(Clone, Debug)]
pub struct ToyKeyPair {
    public: Vec<u8>,
}

impl ToyKeyPair {
    pub fn from_seed(seed: &[u8]) -> Self {
        let public = Sha256::new().chain_update(b"toy-public").chain_update(seed).finalize().to_vec();
        ToyKeyPair { public }
    }
}

fn toy_signature(public: &[u8], message: &[u8]) -> Vec<u8> {
    Sha256::new().chain_update(public).chain_update(message).finalize().to_vec()
}

impl KeyPair for ToyKeyPair {
    fn public_key(&self) -> Vec<u8> {
        self.public.clone()
    }
    fn sign(&self, message: &[u8]) -> Vec<u8> {
        toy_signature(&self.public, message)
    }
}

impl Verifier for ToyScheme {
    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        toy_signature(public_key, message) == signature
    }
}

#[cfg(feature = "ed25519")]
pub use ed::{Ed25519KeyPair, Ed25519Scheme};

#[cfg(feature = "ed25519")]
mod ed {
    use super::{KeyPair, Verifier};
    use ed25519_dalek::{Signature, Signer, SigningKey, Verifier as _, VerifyingKey};

    pub struct Ed25519KeyPair(SigningKey);

    impl Ed25519KeyPair {
        pub fn from_secret(secret: &[u8; 32]) -> Self {
            Ed25519KeyPair(SigningKey::from_bytes(secret))
        }
    }

    impl KeyPair for Ed25519KeyPair {
        fn public_key(&self) -> Vec<u8> {
            self.0.verifying_key().to_bytes().to_vec()
        }
        fn sign(&self, message: &[u8]) -> Vec<u8> {
            self.0.sign(message).to_bytes().to_vec()
        }
    }

    #[derive(Clone, Copy, Debug, Default)]
    pub struct Ed25519Scheme;

    impl Verifier for Ed25519Scheme {
        fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
            let Ok(pk) = <[u8; 32]>::try_from(public_key) else { return false };
            let Ok(key) = VerifyingKey::from_bytes(&pk) else { return false };
            let Ok(sig) = Signature::from_slice(signature) else { return false };
            key.verify(message, &sig).is_ok()
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuthError {
    #[error("identity provider rejected {0:?}")]
    IdentityRejected(String),
    #[error("{0:?} is not on the allowlist")]
    NotAllowlisted(String),
    #[error("malformed frame: {0}")]
    Malformed(&'static str),
}

/// Why an envelope was refused. Reported locally, not sent to the peer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reject {
    TokenSignature,
    TokenExpired,
    BadSignature,
    ClockSkew,
    NonceReplayed,
    WrongRecipient,
    NonceMismatch,
    SenderMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject(Reject),
}

fn hex_bytes<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AccessToken {
    pub username: String,
    #[serde(serialize_with = "hex_bytes")]
    pub public_key: Vec<u8>,
    pub expiry: i64,
    #[serde(serialize_with = "hex_bytes")]
    pub signature: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RequestEnvelope {
    pub token: AccessToken,
    #[serde(serialize_with = "hex_bytes")]
    pub recipient: Vec<u8>,
    pub time: i64,
    #[serde(serialize_with = "hex_bytes")]
    pub nonce: Vec<u8>,
    #[serde(serialize_with = "hex_bytes")]
    pub payload: Vec<u8>,
    #[serde(serialize_with = "hex_bytes")]
    pub signature: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResponseEnvelope {
    pub token: AccessToken,
    #[serde(serialize_with = "hex_bytes")]
    pub nonce: Vec<u8>,
    #[serde(serialize_with = "hex_bytes")]
    pub payload: Vec<u8>,
    #[serde(serialize_with = "hex_bytes")]
    pub signature: Vec<u8>,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn field(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("field shorter than 4 GiB");
        self.0.extend_from_slice(&len.to_be_bytes());
        self.0.extend_from_slice(bytes);
        self
    }
    fn time(&mut self, t: i64) -> &mut Self {
        self.field(&t.to_be_bytes())
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn field(&mut self) -> Result<&'a [u8], AuthError> {
        if self.0.len() < 4 {
            return Err(AuthError::Malformed("truncated length"));
        }
        let (head, rest) = self.0.split_at(4);
        let len = u32::from_be_bytes(head.try_into().expect("4 bytes")) as usize;
        if rest.len() < len {
            return Err(AuthError::Malformed("truncated field"));
        }
        let (body, rest) = rest.split_at(len);
        self.0 = rest;
        Ok(body)
    }
    fn time(&mut self) -> Result<i64, AuthError> {
        let b = self.field()?;
        Ok(i64::from_be_bytes(b.try_into().map_err(|_| AuthError::Malformed("timestamp is not 8 bytes"))?))
    }
    fn finish(self) -> Result<(), AuthError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(AuthError::Malformed("trailing bytes"))
        }
    }
}

impl AccessToken {
    /// Bytes covered by the authority's signature.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.field(self.username.as_bytes()).field(&self.public_key).time(self.expiry);
        w.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(self.signed_bytes());
        w.field(&self.signature);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AuthError> {
        let mut r = Reader(bytes);
        let t = Self::read(&mut r)?;
        r.finish()?;
        Ok(t)
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, AuthError> {
        let username = std::str::from_utf8(r.field()?)
            .map_err(|_| AuthError::Malformed("username is not UTF-8"))?
            .to_owned();
        Ok(AccessToken {
            username,
            public_key: r.field()?.to_vec(),
            expiry: r.time()?,
            signature: r.field()?.to_vec(),
        })
    }

    fn check(&self, authority: &[u8], verifier: &dyn Verifier, now: i64) -> Option<Reject> {
        if !verifier.verify(authority, &self.signed_bytes(), &self.signature) {
            Some(Reject::TokenSignature)
        } else if now >= self.expiry {
            Some(Reject::TokenExpired)
        } else {
            None
        }
    }
}

impl RequestEnvelope {
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.field(&self.token.to_bytes())
            .field(&self.recipient)
            .time(self.time)
            .field(&self.nonce)
            .field(&self.payload);
        w.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(self.signed_bytes());
        w.field(&self.signature);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AuthError> {
        let mut r = Reader(bytes);
        let token = AccessToken::from_bytes(r.field()?)?;
        let env = RequestEnvelope {
            token,
            recipient: r.field()?.to_vec(),
            time: r.time()?,
            nonce: r.field()?.to_vec(),
            payload: r.field()?.to_vec(),
            signature: r.field()?.to_vec(),
        };
        r.finish()?;
        Ok(env)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelope serializes")
    }
}

impl ResponseEnvelope {
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.field(&self.token.to_bytes()).field(&self.nonce).field(&self.payload);
        w.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(self.signed_bytes());
        w.field(&self.signature);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AuthError> {
        let mut r = Reader(bytes);
        let token = AccessToken::from_bytes(r.field()?)?;
        let env = ResponseEnvelope {
            token,
            nonce: r.field()?.to_vec(),
            payload: r.field()?.to_vec(),
            signature: r.field()?.to_vec(),
        };
        r.finish()?;
        Ok(env)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelope serializes")
    }
}

/// What a newly admitted peer receives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AccessPass {
    pub token: AccessToken,
    pub bootstrap: Vec<String>,
}

pub struct Authority {
    key: Box<dyn KeyPair>,
    allowlist: HashSet<String>,
    bootstrap: Vec<String>,
}

impl Authority {
    pub fn new(key: Box<dyn KeyPair>, allowlist: impl IntoIterator<Item = String>, bootstrap: Vec<String>) -> Self {
        Authority {
            key,
            allowlist: allowlist.into_iter().collect(),
            bootstrap,
        }
    }

    pub fn public_key(&self) -> Vec<u8> {
        self.key.public_key()
    }

    /// Issues a token valid until `now + ttl` once `confirm_identity` vouches for the user.
    pub fn issue_pass(
        &self,
        username: &str,
        public_key: &[u8],
        ttl: i64,
        now: i64,
        confirm_identity: impl FnOnce(&str) -> bool,
    ) -> Result<AccessPass, AuthError> {
        if !confirm_identity(username) {
            return Err(AuthError::IdentityRejected(username.to_owned()));
        }
        if !self.allowlist.contains(username) {
            return Err(AuthError::NotAllowlisted(username.to_owned()));
        }
        let mut token = AccessToken {
            username: username.to_owned(),
            public_key: public_key.to_vec(),
            expiry: now.saturating_add(ttl),
            signature: Vec::new(),
        };
        token.signature = self.key.sign(&token.signed_bytes());
        Ok(AccessPass {
            token,
            bootstrap: self.bootstrap.clone(),
        })
    }
}

/// Nonces seen recently, with their first-seen time.
#[derive(Debug)]
pub struct NonceStore {
    window: i64,
    seen: Mutex<HashMap<Vec<u8>, i64>>,
}

impl NonceStore {
    /// `window` is `N`; nonces are remembered for `2N`.
    pub fn new(window: i64) -> Self {
        NonceStore {
            window,
            seen: Mutex::new(HashMap::new()),
        }
    }

    pub fn window(&self) -> i64 {
        self.window
    }

    /// Records `nonce` unless it was seen within `2N` of `now`; false on replay.
    pub fn check_and_insert(&self, nonce: &[u8], now: i64) -> bool {
        let mut seen = self.seen.lock().unwrap_or_else(|p| p.into_inner());
        let horizon = 2 * self.window;
        seen.retain(|_, &mut t| now - t <= horizon);
        if seen.contains_key(nonce) {
            return false;
        }
        seen.insert(nonce.to_vec(), now);
        true
    }

    pub fn len(&self) -> usize {
        self.seen.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for NonceStore {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW)
    }
}

/// A peer holding a key pair and the token issued for it.
pub struct Identity {
    pub key: Box<dyn KeyPair>,
    pub token: AccessToken,
}

impl Identity {
    pub fn request<R: RngCore + ?Sized>(&self, recipient: &[u8], payload: &[u8], now: i64, rng: &mut R) -> RequestEnvelope {
        let mut nonce = vec![0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let mut env = RequestEnvelope {
            token: self.token.clone(),
            recipient: recipient.to_vec(),
            time: now,
            nonce,
            payload: payload.to_vec(),
            signature: Vec::new(),
        };
        env.signature = self.key.sign(&env.signed_bytes());
        env
    }

    pub fn respond(&self, request: &RequestEnvelope, payload: &[u8]) -> ResponseEnvelope {
        let mut env = ResponseEnvelope {
            token: self.token.clone(),
            nonce: request.nonce.clone(),
            payload: payload.to_vec(),
            signature: Vec::new(),
        };
        env.signature = self.key.sign(&env.signed_bytes());
        env
    }
}

/// Checks an incoming request against the five rules, in order. Only an
/// accepted request's nonce is recorded.
pub fn validate_request(
    env: &RequestEnvelope,
    my_public_key: &[u8],
    authority: &[u8],
    verifier: &dyn Verifier,
    nonces: &NonceStore,
    now: i64,
) -> Verdict {
    if let Some(r) = env.token.check(authority, verifier, now) {
        return Verdict::Reject(r);
    }
    if !verifier.verify(&env.token.public_key, &env.signed_bytes(), &env.signature) {
        return Verdict::Reject(Reject::BadSignature);
    }
    if (env.time - now).abs() > nonces.window() {
        return Verdict::Reject(Reject::ClockSkew);
    }
    if env.recipient != my_public_key {
        // Checked before touching the store so a misaddressed request cannot burn a nonce.
        if nonces.seen_recently(&env.nonce, now) {
            return Verdict::Reject(Reject::NonceReplayed);
        }
        return Verdict::Reject(Reject::WrongRecipient);
    }
    if !nonces.check_and_insert(&env.nonce, now) {
        return Verdict::Reject(Reject::NonceReplayed);
    }
    Verdict::Accept
}

impl NonceStore {
    fn seen_recently(&self, nonce: &[u8], now: i64) -> bool {
        let seen = self.seen.lock().unwrap_or_else(|p| p.into_inner());
        seen.get(nonce).is_some_and(|&t| now - t <= 2 * self.window)
    }
}

/// Checks a response to our outstanding request with nonce `expected_nonce`.
/// When `expected_responder` is given, the responder's token must carry that key.
pub fn validate_response(
    env: &ResponseEnvelope,
    expected_nonce: &[u8],
    expected_responder: Option<&[u8]>,
    authority: &[u8],
    verifier: &dyn Verifier,
    now: i64,
) -> Verdict {
    if let Some(r) = env.token.check(authority, verifier, now) {
        return Verdict::Reject(r);
    }
    if !verifier.verify(&env.token.public_key, &env.signed_bytes(), &env.signature) {
        return Verdict::Reject(Reject::BadSignature);
    }
    if env.nonce != expected_nonce {
        return Verdict::Reject(Reject::NonceMismatch);
    }
    if expected_responder.is_some_and(|k| k != env.token.public_key) {
        return Verdict::Reject(Reject::SenderMismatch);
    }
    Verdict::Accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const T0: i64 = 1_700_000_000;

    struct World {
        authority: Authority,
        alice: Identity,
        bob: Identity,
    }

    fn world() -> World {
        let authority = Authority::new(
            Box::new(ToyKeyPair::from_seed(b"authority")),
            ["alice".to_string(), "bob".to_string()],
            vec!["/ip4/10.0.0.1/tcp/4000".into()],
        );
        let mk = |name: &str| {
            let key = ToyKeyPair::from_seed(name.as_bytes());
            let token = authority.issue_pass(name, &key.public_key(), 3600, T0, |_| true).unwrap().token;
            Identity { key: Box::new(key), token }
        };
        let alice = mk("alice");
        let bob = mk("bob");
        World { authority, alice, bob }
    }

    #[test]
    fn issuance_rules() {
        let w = world();
        let pk = ToyKeyPair::from_seed(b"m").public_key();
        assert_eq!(
            w.authority.issue_pass("mallory", &pk, 10, T0, |_| true),
            Err(AuthError::NotAllowlisted("mallory".into()))
        );
        assert_eq!(
            w.authority.issue_pass("alice", &pk, 10, T0, |_| false),
            Err(AuthError::IdentityRejected("alice".into()))
        );
        let pass = w.authority.issue_pass("alice", &pk, 10, T0, |_| true).unwrap();
        assert_eq!(pass.token.expiry, T0 + 10);
        assert!(ToyScheme.verify(&w.authority.public_key(), &pass.token.signed_bytes(), &pass.token.signature));
    }

    #[test]
    fn request_rules() {
        let w = world();
        let auth = w.authority.public_key();
        let bob_pk = w.bob.key.public_key();
        let store = NonceStore::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let req = w.alice.request(&bob_pk, b"hello", T0, &mut rng);
        assert_eq!(validate_request(&req, &bob_pk, &auth, &ToyScheme, &store, T0), Verdict::Accept);
        assert_eq!(
            validate_request(&req, &bob_pk, &auth, &ToyScheme, &store, T0 + 1),
            Verdict::Reject(Reject::NonceReplayed)
        );

        let old = w.alice.request(&bob_pk, b"hello", T0 - DEFAULT_WINDOW - 1, &mut rng);
        assert_eq!(
            validate_request(&old, &bob_pk, &auth, &ToyScheme, &store, T0),
            Verdict::Reject(Reject::ClockSkew)
        );

        let misaddressed = w.alice.request(&w.alice.key.public_key(), b"hello", T0, &mut rng);
        assert_eq!(
            validate_request(&misaddressed, &bob_pk, &auth, &ToyScheme, &store, T0),
            Verdict::Reject(Reject::WrongRecipient)
        );
    }

    #[test]
    fn response_rules() {
        let w = world();
        let auth = w.authority.public_key();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let req = w.alice.request(&w.bob.key.public_key(), b"q", T0, &mut rng);
        let resp = w.bob.respond(&req, b"a");
        let bob_pk = w.bob.key.public_key();
        assert_eq!(
            validate_response(&resp, &req.nonce, Some(&bob_pk), &auth, &ToyScheme, T0),
            Verdict::Accept
        );
        assert_eq!(
            validate_response(&resp, &[0u8; NONCE_LEN], None, &auth, &ToyScheme, T0),
            Verdict::Reject(Reject::NonceMismatch)
        );
        assert_eq!(
            validate_response(&resp, &req.nonce, Some(&w.alice.key.public_key()), &auth, &ToyScheme, T0),
            Verdict::Reject(Reject::SenderMismatch)
        );
        assert_eq!(
            validate_response(&resp, &req.nonce, None, &auth, &ToyScheme, T0 + 3600),
            Verdict::Reject(Reject::TokenExpired)
        );
    }

    #[test]
    fn wire_round_trip() {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let req = w.alice.request(&w.bob.key.public_key(), b"payload", T0, &mut rng);
        assert_eq!(RequestEnvelope::from_bytes(&req.to_bytes()).unwrap(), req);
        let resp = w.bob.respond(&req, b"ok");
        assert_eq!(ResponseEnvelope::from_bytes(&resp.to_bytes()).unwrap(), resp);
        let bytes = req.to_bytes();
        assert!(RequestEnvelope::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let json: serde_json::Value = serde_json::from_str(&req.to_json()).unwrap();
        assert_eq!(json["payload"], hex::encode(b"payload"));
        assert_eq!(json["token"]["username"], "alice");
    }

    #[cfg(feature = "ed25519")]
    #[test]
    fn ed25519_scheme() {
        let k = Ed25519KeyPair::from_secret(&[7u8; 32]);
        let sig = k.sign(b"m");
        assert!(Ed25519Scheme.verify(&k.public_key(), b"m", &sig));
        assert!(!Ed25519Scheme.verify(&k.public_key(), b"n", &sig));
    }
}
