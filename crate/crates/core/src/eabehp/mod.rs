//! Attribute-based encryption with hidden policy and hidden credentials.
//!
//! A sender encrypts under a trit-vector policy and shuffles the tuples with a
//! time key `omega` that the proxy never learns. The proxy (security agent)
//! transforms the ciphertext with `TK`, extracts the tuples named by the
//! receiver's *permuted* attribute indices and strips the receiver-key blinding.
//! Only the receiver, who knows `omega`, can cancel the residual permutation
//! factor and recover the message.
//!
//! Pipeline: [`setup`] → [`keygen`] → [`time_key_gen`] → [`transform_user_key`]
//! → [`encrypt`] → [`shuffle`] → [`transform_ciphertext`] → [`extract`] →
//! [`proxy_decrypt1`] → [`proxy_decrypt2`].

mod policy;
mod scheme;

use thiserror::Error;

use crate::group::GroupError;

pub use policy::{inverse_permute_attrs, satisfies, AttributeSet, Policy, Trit};
pub use scheme::{
    encrypt, encrypt_tuples, extract, keygen, proxy_decrypt1, proxy_decrypt2, setup, shuffle, time_key_digest,
    time_key_gen, transform_ciphertext, transform_user_key, ExtractedCiphertext, MasterKeyMaterial, MasterPublicKey,
    PartialDecryption, Stage, StagedCiphertext, TransformKey, UserKeyMaterial,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EabehpError {
    #[error("system must have at least one attribute")]
    ZeroAttributes,
    #[error("attribute set is empty")]
    EmptyAttributeSet,
    #[error("attribute index {index} outside 1..={universe}")]
    AttributeRange { index: usize, universe: usize },
    #[error("attribute index {0} listed twice")]
    DuplicateAttribute(usize),
    #[error("attribute universe is {got}, expected {expected}")]
    UniverseMismatch { expected: usize, got: usize },
    #[error("policy has no required attribute")]
    NoRequiredAttribute,
    #[error("policy length {got} does not match N={expected}")]
    PolicyLength { expected: usize, got: usize },
    #[error("policy syntax: {0}")]
    PolicySyntax(String),
    #[error("ciphertext at stage {got:?}, expected {expected:?}")]
    Stage { expected: Stage, got: Stage },
    #[error("attribute set sizes do not match")]
    SizeMismatch,
    #[error("encoding: {0}")]
    Encoding(String),
    #[error(transparent)]
    Group(#[from] GroupError),
}
