//! The built-in attack suite: four families of security claims, each checked
//! by driving a deployment through honest runs and adversarial variations.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::adversary::{flip_byte, forge_token, relabel_token, TokenClaim, TokenKind};
use super::audit::audit_key_freshness;
use super::network::{Delivery, SimError, SimNet, DEFAULT_PASSPORT_VALIDITY_MS};
use crate::actors::TrustLevel;
use crate::clock::DEFAULT_FRESHNESS_WINDOW_MS;
use crate::crypto::{CryptoSuite, Nonce, NONCE_LEN};
use crate::tokens::{SealedPassport, SealedVisa};
use crate::wire::{HnChallenge, ProtocolMessage, ServiceAck, ServiceProof, ServiceResponse};

/// How hard each claim is exercised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackConfig {
    /// Forged tokens of each kind.
    pub forgeries: usize,
    /// Independent traces in which captured messages are replayed.
    pub replay_traces: usize,
    /// Man-in-the-middle trials.
    pub mitm_trials: usize,
    /// Sessions run for the key-freshness audit.
    pub sessions: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            forgeries: 100,
            replay_traces: 50,
            mitm_trials: 50,
            sessions: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimResult {
    pub name: &'static str,
    pub checks: Vec<Check>,
}

impl ClaimResult {
    pub fn upheld(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn check(&mut self, label: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            label: label.into(),
            passed,
            detail: detail.into(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackReport {
    pub seed: u64,
    pub suite: &'static str,
    pub claims: Vec<ClaimResult>,
}

impl AttackReport {
    pub fn all_upheld(&self) -> bool {
        self.claims.iter().all(ClaimResult::upheld)
    }

    pub fn claim(&self, name: &str) -> Option<&ClaimResult> {
        self.claims.iter().find(|c| c.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = format!("attack suite seed={} suite={}\n", self.seed, self.suite);
        for claim in &self.claims {
            let verdict = if claim.upheld() { "HOLDS" } else { "VIOLATED" };
            let _ = writeln!(out, "[{verdict}] {}", claim.name);
            for c in &claim.checks {
                let mark = if c.passed { "ok  " } else { "FAIL" };
                let _ = writeln!(out, "    {mark} {}: {}", c.label, c.detail);
            }
        }
        out
    }
}

pub const FORGERY: &str = "token forgery";
pub const MUTUAL_AUTH: &str = "mutual authentication and integrity";
pub const REPLAY_MITM: &str = "replay and man-in-the-middle";
pub const KEY_FRESHNESS: &str = "session key freshness";

const MU: &str = "alice";
const FN1: &str = "fn1";
const FN2: &str = "fn2";
const HN: &str = "hn";
const EVE: &str = "eve";

/// A CA, one HN, two FNs, a registered MU holding one Visa from `fn1`, and
/// an attacker.
pub fn deployment(seed: u64, suite: Arc<dyn CryptoSuite>) -> Result<SimNet, SimError> {
    let mut net = SimNet::new(seed, suite);
    net.add_ca("ca")?;
    net.add_home(HN)?;
    net.add_foreign(FN1)?;
    net.add_foreign(FN2)?;
    net.add_mobile(MU, HN)?;
    net.add_attacker(EVE)?;
    net.register(MU, DEFAULT_PASSPORT_VALIDITY_MS)?;
    net.request_visa(MU, FN1, "web")?;
    net.deliver_all()?;
    Ok(net)
}

fn session(net: &mut SimNet) -> Result<Vec<Delivery>, SimError> {
    net.request_service(MU, FN1, "web")?;
    net.deliver_all()
}

fn rejected_with(ds: &[Delivery], reason: &str) -> bool {
    ds.iter().any(|d| d.reason() == Some(reason))
}

fn claim_for(net: &mut SimNet, kind: TokenKind, rng: &mut ChaCha20Rng) -> Result<TokenClaim, SimError> {
    let pass_no = net.mobile(MU)?.smart_card().map(|c| c.pass_no).unwrap_or(1);
    let visa_no = net.latest_visa(MU, FN1).unwrap_or(1);
    let expiry = net.now().plus(DEFAULT_PASSPORT_VALIDITY_MS);
    let eve = net.attacker_mut(EVE)?;
    let master_key = eve.crypto.random_key();
    let pass_no = if kind == TokenKind::Passport && rng.gen_bool(0.5) {
        pass_no + rng.gen_range(1..1000)
    } else {
        pass_no
    };
    Ok(TokenClaim {
        id_mu: MU.to_string(),
        pass_no,
        visa_no,
        expiry,
        master_key,
    })
}

fn forgery(seed: u64, suite: Arc<dyn CryptoSuite>, cfg: &AttackConfig) -> Result<ClaimResult, SimError> {
    let mut claim = ClaimResult {
        name: FORGERY,
        checks: Vec::new(),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xf0f0);
    let mut net = deployment(seed, suite)?;
    let hn_cert = net.home(HN)?.credentials().cert.clone();
    let fn1_cert = net.foreign(FN1)?.credentials().cert.clone();
    let genuine_passport = net.mobile(MU)?.smart_card().expect("registered").passport.clone();

    let (mut accepted, mut misreported) = (0, 0);
    for i in 0..cfg.forgeries {
        let mut req = net.mobile_mut(MU)?.begin_visa_acquisition(FN1, "web")?;
        let tc = claim_for(&mut net, TokenKind::Passport, &mut rng)?;
        let eve = net.attacker_mut(EVE)?;
        req.passport = SealedPassport(match i % 3 {
            0 => forge_token(
                &mut eve.crypto,
                TokenKind::Passport,
                &eve.keys,
                &hn_cert.subject_public_key,
                &tc,
            ),
            1 => relabel_token(
                &mut eve.crypto,
                TokenKind::Passport,
                &hn_cert.subject_public_key,
                &tc,
                &hn_cert.ca_signature,
            ),
            _ => flip_byte(&genuine_passport.0, rng.gen_range(0..genuine_passport.0.len())),
        });
        let before = net.mobile(MU)?.visas().len();
        net.send(MU, FN1, &ProtocolMessage::VisaRequest(req));
        let ds = net.deliver_all()?;
        if net.mobile(MU)?.visas().len() != before {
            accepted += 1;
        }
        if !rejected_with(&ds, "bad_passport") {
            misreported += 1;
        }
    }
    claim.check(
        "forged passports rejected",
        accepted == 0,
        format!("{accepted} of {} accepted", cfg.forgeries),
    );
    claim.check(
        "forged passports rejected as bad_passport",
        misreported == 0,
        format!("{misreported} rejected for another reason"),
    );

    let (mut accepted, mut misreported) = (0, 0);
    for i in 0..cfg.forgeries {
        let visa_no = net.latest_visa(MU, FN1)?;
        let mut req = net.mobile_mut(MU)?.begin_service(FN1, visa_no, "web")?;
        let tc = claim_for(&mut net, TokenKind::Visa, &mut rng)?;
        let eve = net.attacker_mut(EVE)?;
        let mut target = FN1;
        req.visa = match i % 3 {
            0 => SealedVisa(forge_token(
                &mut eve.crypto,
                TokenKind::Visa,
                &eve.keys,
                &fn1_cert.subject_public_key,
                &tc,
            )),
            1 => SealedVisa(relabel_token(
                &mut eve.crypto,
                TokenKind::Visa,
                &fn1_cert.subject_public_key,
                &tc,
                &fn1_cert.ca_signature,
            )),
            // A genuine Visa presented to an FN that did not issue it.
            _ => {
                target = FN2;
                req.visa
            }
        };
        let before = net.audit().sessions().len();
        net.send(MU, target, &ProtocolMessage::ServiceRequest(req));
        let ds = net.deliver_all()?;
        if net.audit().sessions().len() != before || ds.iter().any(|d| d.outcome.as_deref() == Ok("service granted")) {
            accepted += 1;
        }
        if !rejected_with(&ds, "bad_visa") {
            misreported += 1;
        }
    }
    claim.check(
        "forged visas rejected",
        accepted == 0,
        format!("{accepted} of {} accepted", cfg.forgeries),
    );
    claim.check(
        "forged visas rejected as bad_visa",
        misreported == 0,
        format!("{misreported} rejected for another reason"),
    );
    Ok(claim)
}

fn mutual_auth(seed: u64, suite: Arc<dyn CryptoSuite>) -> Result<ClaimResult, SimError> {
    let mut claim = ClaimResult {
        name: MUTUAL_AUTH,
        checks: Vec::new(),
    };
    let mut net = deployment(seed, suite)?;
    for _ in 0..3 {
        session(&mut net)?;
    }
    let visa_no = net.latest_visa(MU, FN1)?;
    let agree = net.mobile(MU)?.chain_key(FN1, visa_no) == net.foreign(FN1)?.chain_key(visa_no);
    claim.check(
        "honest sessions authenticate both ends",
        net.audit().mutual_auth(MU, FN1) == 3,
        format!("{} mutually authenticated sessions", net.audit().mutual_auth(MU, FN1)),
    );
    claim.check("chain keys agree", agree, format!("visa {visa_no}"));
    claim.check(
        "trust is full both ways",
        net.audit().trust(MU, FN1) == TrustLevel::Full && net.audit().trust(FN1, MU) == TrustLevel::Full,
        format!(
            "{} / {}",
            net.audit().trust(MU, FN1).as_str(),
            net.audit().trust(FN1, MU).as_str()
        ),
    );
    let goals = net.audit().goal_checklist(MU, FN1, HN);
    let unmet: Vec<&str> = goals.iter().filter(|(_, ok)| !ok).map(|(g, _)| g.as_str()).collect();
    claim.check(
        "authentication goals met",
        unmet.is_empty(),
        format!("unmet: {unmet:?}"),
    );

    // An attacker answers in the FN's place.
    net.request_service(MU, FN1, "web")?;
    net.drop_next()?;
    let pass_no = net.mobile(MU)?.smart_card().expect("registered").pass_no;
    let eve = net.attacker_mut(EVE)?;
    let k1 = eve.crypto.random_key();
    let k2 = eve.crypto.random_key();
    let r1_fn = eve.crypto.fresh_nonce();
    let fake = ServiceResponse {
        cipher2: eve.crypto.enc_sym(&k1, &ServiceAck { r1_fn, pass_no }.encode()),
        payload: eve.crypto.enc_sym(&k2, b"impostor"),
    };
    net.send(EVE, MU, &ProtocolMessage::ServiceResponse(fake));
    let d = net.deliver_next()?;
    claim.check(
        "impostor response rejected",
        d.reason() == Some("bad_response"),
        format!("{:?}", d.outcome),
    );

    // The genuine response is modified in flight.
    net.request_service(MU, FN1, "web")?;
    net.deliver_next()?;
    let len = net.queue().front().map_or(0, |e| e.bytes.len());
    net.tamper_next(len - 1)?;
    let d = net.deliver_next()?;
    let intact = net.receipts().last().is_some_and(|r| r.intact());
    claim.check(
        "modified service response detected",
        !d.accepted() || intact,
        format!("{:?}", d.outcome),
    );

    // A lost or rejected response leaves the MU one key behind; the next
    // session still completes.
    let before = net.audit().mutual_auth(MU, FN1);
    session(&mut net)?;
    claim.check(
        "session after a failed response completes",
        net.audit().mutual_auth(MU, FN1) == before + 1,
        format!("{} -> {}", before, net.audit().mutual_auth(MU, FN1)),
    );

    // A captured Visa with a proof under a key the attacker made up.
    let visa = net.mobile(MU)?.visas()[&(FN1.to_string(), visa_no)].visa.clone();
    let eve = net.attacker_mut(EVE)?;
    let k = eve.crypto.random_key();
    let r1 = eve.crypto.fresh_nonce();
    let cipher1 = eve.crypto.enc_sym(&k, &ServiceProof { r1_mu: r1, visa_no }.encode());
    net.send(
        EVE,
        FN1,
        &ProtocolMessage::ServiceRequest(crate::wire::ServiceRequest {
            descriptor: "web".to_string(),
            visa,
            cipher1,
        }),
    );
    let d = net.deliver_next()?;
    net.deliver_all()?;
    claim.check(
        "stolen visa without the chain key rejected",
        d.reason() == Some("bad_proof"),
        format!("{:?}", d.outcome),
    );
    claim.check(
        "attacker never trusted",
        net.audit().trust(FN1, EVE) == TrustLevel::None,
        net.audit().trust(FN1, EVE).as_str(),
    );
    claim.check(
        "no invariant violations",
        net.violations().is_empty(),
        format!("{:?}", net.violations()),
    );
    Ok(claim)
}

fn index_of(net: &SimNet, tag: u8, from: &str) -> Vec<usize> {
    net.trace()
        .messages
        .iter()
        .filter(|m| m.from == from && m.bytes.first() == Some(&tag))
        .map(|m| m.index)
        .collect()
}

/// Offset of `r_MU` inside a `cipher_to_hn` field, found by encoding a
/// challenge with a marker nonce.
fn r_mu_offset(id_fn: &str) -> usize {
    let marker = Nonce::from_bytes([0xa5; NONCE_LEN]);
    let pt = HnChallenge {
        id_fn: id_fn.to_string(),
        r_mu: marker,
        t_mu: crate::crypto::Timestamp(0),
    }
    .encode();
    let pos = pt
        .windows(NONCE_LEN)
        .position(|w| w == marker.as_bytes())
        .expect("marker present");
    // Both symmetric layers prefix a 12-byte nonce.
    12 + pos + NONCE_LEN / 2
}

fn replay_mitm(seed: u64, suite: Arc<dyn CryptoSuite>, cfg: &AttackConfig) -> Result<ClaimResult, SimError> {
    let mut claim = ClaimResult {
        name: REPLAY_MITM,
        checks: Vec::new(),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let (mut replays, mut accepted) = (0usize, 0usize);
    let (mut stale_ok, mut stale_total, mut proof_ok, mut proof_total) = (0, 0, 0, 0);
    for t in 0..cfg.replay_traces {
        let mut net = deployment(seed.wrapping_add(1 + t as u64), suite.clone())?;
        for _ in 0..rng.gen_range(1..=3) {
            session(&mut net)?;
        }
        for idx in index_of(&net, 0x05, MU) {
            let d = net.replay(idx, FN1)?;
            replays += 1;
            proof_total += 1;
            accepted += usize::from(d.accepted());
            proof_ok += usize::from(d.reason() == Some("bad_proof"));
            net.deliver_all()?;
        }
        net.advance_clock(DEFAULT_FRESHNESS_WINDOW_MS + 1 + rng.gen_range(0..600_000));
        for (tag, from, to) in [(0x01, MU, FN1), (0x02, FN1, HN)] {
            for idx in index_of(&net, tag, from) {
                let d = net.replay(idx, to)?;
                replays += 1;
                stale_total += 1;
                accepted += usize::from(d.accepted());
                stale_ok += usize::from(d.reason() == Some("stale"));
                net.deliver_all()?;
            }
        }
        for idx in index_of(&net, 0x04, FN1) {
            let d = net.replay(idx, MU)?;
            replays += 1;
            accepted += usize::from(d.accepted());
        }
        for idx in index_of(&net, 0x06, FN1) {
            let before = net.audit().mutual_auth(MU, FN1);
            let d = net.replay(idx, MU)?;
            replays += 1;
            accepted += usize::from(d.accepted() || net.audit().mutual_auth(MU, FN1) != before);
        }
    }
    claim.check(
        "no replay accepted",
        accepted == 0,
        format!(
            "{accepted} of {replays} replays across {} traces accepted",
            cfg.replay_traces
        ),
    );
    claim.check(
        "late replays rejected as stale",
        stale_ok == stale_total,
        format!("{stale_ok} of {stale_total}"),
    );
    claim.check(
        "replayed service requests rejected as bad_proof",
        proof_ok == proof_total,
        format!("{proof_ok} of {proof_total}"),
    );

    let mut net = deployment(seed, suite)?;
    let offset = r_mu_offset(FN1);
    let (mut redirect_ok, mut tamper_ok, mut granted) = (0, 0, 0);
    let (mut redirects, mut tampers) = (0, 0);
    for j in 0..cfg.mitm_trials {
        let before = net.mobile(MU)?.visas().len();
        let idx = net.request_visa(MU, FN1, "web")?;
        if j % 2 == 0 {
            // Divert the request to another FN.
            redirects += 1;
            net.drop_next()?;
            let mut ds = vec![net.replay(idx, FN2)?];
            ds.extend(net.deliver_all()?);
            redirect_ok += usize::from(rejected_with(&ds, "id_mismatch"));
        } else {
            // Modify r_MU inside the challenge the FN relays.
            tampers += 1;
            net.deliver_next()?;
            let env = net.drop_next()?;
            let Ok(ProtocolMessage::ForwardToHn(mut fwd)) = ProtocolMessage::decode(&env.bytes) else {
                unreachable!("FN relays a ForwardToHn");
            };
            fwd.cipher_to_hn = flip_byte(&fwd.cipher_to_hn, offset);
            net.send(&env.from, &env.to, &ProtocolMessage::ForwardToHn(fwd));
            let ds = net.deliver_all()?;
            tamper_ok += usize::from(rejected_with(&ds, "id_mismatch"));
        }
        if net.mobile(MU)?.visas().len() != before {
            granted += 1;
        }
    }
    claim.check(
        "diverted requests rejected as id_mismatch",
        redirect_ok == redirects,
        format!("{redirect_ok} of {redirects}"),
    );
    claim.check(
        "modified challenges rejected as id_mismatch",
        tamper_ok == tampers,
        format!("{tamper_ok} of {tampers}"),
    );
    claim.check(
        "no visa issued to a man in the middle",
        granted == 0,
        format!("{granted} visas granted"),
    );
    Ok(claim)
}

fn key_freshness(seed: u64, suite: Arc<dyn CryptoSuite>, cfg: &AttackConfig) -> Result<ClaimResult, SimError> {
    let mut claim = ClaimResult {
        name: KEY_FRESHNESS,
        checks: Vec::new(),
    };
    let mut net = deployment(seed, suite)?;
    for _ in 0..cfg.sessions {
        session(&mut net)?;
    }
    match audit_key_freshness(net.trace(), cfg.sessions) {
        Ok(r) => {
            claim.check(
                "per-session keys pairwise distinct",
                r.distinct_keys == 3 * cfg.sessions,
                format!("{} distinct keys over {} sessions", r.distinct_keys, r.sessions),
            );
            claim.check(
                "K_MU-FN never used as a traffic key",
                r.master_keys_checked > 0,
                format!("{} master keys checked", r.master_keys_checked),
            );
        }
        Err(e) => claim.check("key freshness audit", false, e.to_string()),
    }
    Ok(claim)
}

/// Runs every claim family against a fresh deployment seeded from `seed`.
pub fn run_attack_suite(seed: u64, suite: Arc<dyn CryptoSuite>, cfg: &AttackConfig) -> Result<AttackReport, SimError> {
    Ok(AttackReport {
        seed,
        suite: suite.name(),
        claims: vec![
            forgery(seed, suite.clone(), cfg)?,
            mutual_auth(seed, suite.clone())?,
            replay_mitm(seed, suite.clone(), cfg)?,
            key_freshness(seed, suite, cfg)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{StandardSuite, UnauthenticatedSymmetric};

    const SMALL: AttackConfig = AttackConfig {
        forgeries: 6,
        replay_traces: 3,
        mitm_trials: 4,
        sessions: 4,
    };

    #[test]
    fn standard_suite_upholds_every_claim() {
        let report = run_attack_suite(11, Arc::new(StandardSuite), &SMALL).unwrap();
        assert!(report.all_upheld(), "{}", report.render());
    }

    #[test]
    fn unauthenticated_symmetric_layer_breaks_tamper_claims() {
        let report = run_attack_suite(11, Arc::new(UnauthenticatedSymmetric(StandardSuite)), &SMALL).unwrap();
        assert!(!report.claim(MUTUAL_AUTH).unwrap().upheld(), "{}", report.render());
        assert!(!report.claim(REPLAY_MITM).unwrap().upheld(), "{}", report.render());
        assert!(!report.all_upheld());
    }
}
