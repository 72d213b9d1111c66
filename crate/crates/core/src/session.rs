//! The full pipeline: photon source → protocol → reconciliation → privacy
//! amplification → one-time-pad transmission of a secret.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bits::BitString;
use crate::channel::{Payload, ProtocolMessage, RoundRef};
use crate::postproc::{
    final_key_length, privacy_amplify, reconcile, BlockConfig, KeyMaterial, KeyStage, OneTimePad, PostprocError,
    ReconcileReport, ToeplitzSeed,
};
use crate::protocol::{run_protocol, CheckKind, ProtocolConfig, ProtocolError, SessionResult};
use crate::quantum::{bell_s, correlation_analytic, BellSetting};
use crate::rng::{SeedTree, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PostprocConfig {
    /// Security margin subtracted from the final length, in bits.
    pub epsilon: u32,
    pub block_factor: f64,
    pub passes: u32,
    pub verify_parities: u32,
    pub max_verifications: u32,
    /// Length of the secret sent under the one-time pad (capped by the
    /// final key).
    pub message_bits: usize,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        let block = BlockConfig::new(0.0);
        Self {
            epsilon: 40,
            block_factor: block.block_factor,
            passes: block.passes,
            verify_parities: block.verify_parities,
            max_verifications: block.max_verifications,
            message_bits: 128,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SessionConfig {
    pub protocol: ProtocolConfig,
    pub postproc: PostprocConfig,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("post-processing failed: {0}")]
    Postproc(#[from] PostprocError),
}

#[derive(Debug)]
pub struct SessionOutcome {
    pub protocol: SessionResult,
    /// QBER assumed when sizing the first reconciliation blocks.
    pub planning_qber: f64,
    pub reconcile: ReconcileReport,
    /// Error rate found by reconciliation, used in the length formula.
    pub observed_qber: f64,
    pub dealer_key: KeyMaterial,
    pub access_key: KeyMaterial,
    pub message: BitString,
    pub ciphertext: BitString,
    /// What the access set recovers from the ciphertext.
    pub decrypted: BitString,
}

impl SessionOutcome {
    pub fn keys_agree(&self) -> bool {
        self.dealer_key.bits() == self.access_key.bits()
    }

    pub fn decrypt_ok(&self) -> bool {
        self.decrypted == self.message
    }
}

/// QBER implied by the check: the sampled rate, or in Bell mode the
/// white-noise rate matching the measured S.
fn planning_qber(result: &SessionResult) -> f64 {
    let q = match result.report.kind {
        CheckKind::Qber => result.report.estimate,
        CheckKind::Bell => {
            let ideal = bell_s(&BellSetting::standard(), correlation_analytic);
            (1.0 - result.report.estimate / ideal) / 2.0
        }
    };
    q.clamp(0.0, 0.45)
}

pub fn run_session(config: &SessionConfig, seeds: &SeedTree) -> Result<SessionOutcome, SessionError> {
    let result = run_protocol(&config.protocol, seeds)?;
    let roles = result.roles;
    let dealer = roles.dealer();
    let channel = &result.channel;
    let n = result.key.len();
    let qber = planning_qber(&result);

    let pp = &config.postproc;
    let block = BlockConfig {
        qber,
        block_factor: pp.block_factor,
        passes: pp.passes,
        verify_parities: pp.verify_parities,
        max_verifications: pp.max_verifications,
    };
    let dealer_sifted = KeyMaterial::sifted(result.key.row(dealer).clone(), qber);
    let access_sifted = KeyMaterial::sifted(result.key.access_xor(&roles), qber);
    let mut rng = seeds.stream(Stream::Reconciliation);
    let rec = reconcile(
        dealer_sifted.bits(),
        access_sifted.bits(),
        &roles,
        channel,
        &block,
        &mut rng,
    )?;
    let leaked = rec.report.leaked_bits;
    let observed_qber = if n == 0 {
        0.0
    } else {
        rec.report.corrected as f64 / n as f64
    };
    let dealer_rec = dealer_sifted.advance(KeyStage::Reconciled, rec.dealer, leaked)?;
    let access_rec = access_sifted.advance(KeyStage::Reconciled, rec.access, leaked)?;

    // the dealer picks the hash and announces it
    let n_out = final_key_length(n, observed_qber, leaked, pp.epsilon);
    let seed = ToeplitzSeed::random(n, n_out, &mut seeds.stream(Stream::Hashing));
    channel
        .broadcast(ProtocolMessage::new(
            dealer,
            RoundRef::None,
            Payload::HashSeed {
                n_in: n,
                n_out,
                seed: seed.bits().clone(),
            },
        ))
        .map_err(PostprocError::from)?;
    let mut received = None;
    for member in roles.access_set() {
        match channel.recv_from(member, dealer).map(|m| m.payload) {
            Some(Payload::HashSeed { n_in, n_out, seed }) => received = Some(ToeplitzSeed::new(n_in, n_out, seed)?),
            other => unreachable!("{member} expected the hash seed, got {other:?}"),
        }
    }
    let access_seed = received.expect("access set is never empty");
    let dealer_final_bits = privacy_amplify(dealer_rec.bits(), &seed, n_out)?;
    let access_final_bits = privacy_amplify(access_rec.bits(), &access_seed, n_out)?;
    let dealer_key = dealer_rec.advance(KeyStage::Final, dealer_final_bits, 0)?;
    let access_key = access_rec.advance(KeyStage::Final, access_final_bits, 0)?;

    // the dealer's secret travels under the pad; the access set decrypts
    let mut msg_rng = seeds.stream(Stream::Message);
    let message: BitString = (0..pp.message_bits.min(n_out))
        .map(|_| msg_rng.random::<bool>() as u8)
        .collect();
    let ciphertext = OneTimePad::new(dealer_key.bits().clone()).encrypt(&message)?;
    channel
        .broadcast(ProtocolMessage::new(
            dealer,
            RoundRef::None,
            Payload::Ciphertext {
                ciphertext: ciphertext.clone(),
            },
        ))
        .map_err(PostprocError::from)?;
    let mut decrypted = BitString::new();
    for member in roles.access_set() {
        if let Some(Payload::Ciphertext { ciphertext }) = channel.recv_from(member, dealer).map(|m| m.payload) {
            decrypted = OneTimePad::new(access_key.bits().clone()).decrypt(&ciphertext)?;
        }
    }

    Ok(SessionOutcome {
        planning_qber: qber,
        reconcile: rec.report,
        observed_qber,
        dealer_key,
        access_key,
        message,
        ciphertext,
        decrypted,
        protocol: result,
    })
}
