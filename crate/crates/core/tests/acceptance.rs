//! Acceptance gate. Runs ten end-to-end criteria and prints one PASS or FAIL
//! line for each; the process fails if any criterion fails or the whole gate
//! takes 60 seconds or more.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use pvkit::actors::{KeyKind, NonceLabel, TrustLevel};
use pvkit::clock::DEFAULT_FRESHNESS_WINDOW_MS;
use pvkit::crypto::{CryptoContext, CryptoSuite, Nonce, StandardSuite, SymmetricKey, UnauthenticatedSymmetric};
use pvkit::key_schedule;
use pvkit::sim::adversary::{flip_byte, forge_token, relabel_token, TokenClaim, TokenKind};
use pvkit::sim::network::DEFAULT_PASSPORT_VALIDITY_MS;
use pvkit::sim::scenario::{self, Scenario};
use pvkit::sim::{audit_key_freshness, run_attack_suite, AttackConfig, Delivery, SimError, SimNet};
use pvkit::tokens::{SealedPassport, SealedVisa};
use pvkit::wire::{self, HnChallenge, KeyDelivery, ProtocolMessage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const MU: &str = "alice";
const HN: &str = "hn";
const FN1: &str = "fn1";
const FN2: &str = "fn2";
const EVE: &str = "eve";

const TIME_BUDGET: Duration = Duration::from_secs(60);

/// MU operation counters gathered from every deployment of criteria 1 to 7.
#[derive(Default)]
struct MuLedger {
    rows: Vec<(u32, u64, u64)>,
}

impl MuLedger {
    fn observe(&mut self, criterion: u32, net: &SimNet) {
        let counts = net.mobile(MU).expect("deployment has an MU").crypto().counts();
        self.rows.push((criterion, counts.asymmetric(), counts.symmetric()));
    }
}

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn sim<T>(r: Result<T, SimError>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn standard() -> Arc<dyn CryptoSuite> {
    Arc::new(StandardSuite)
}

/// A CA, one HN, `fns` FNs with no HN state of their own, a registered MU
/// and an attacker.
fn deployment(seed: u64, suite: Arc<dyn CryptoSuite>, fns: &[&str]) -> Result<SimNet, String> {
    let mut net = SimNet::new(seed, suite);
    sim(net.add_ca("ca"))?;
    sim(net.add_home(HN))?;
    for f in fns {
        sim(net.add_foreign(f))?;
    }
    sim(net.add_mobile(MU, HN))?;
    sim(net.add_attacker(EVE))?;
    sim(net.register(MU, DEFAULT_PASSPORT_VALIDITY_MS))?;
    Ok(net)
}

fn acquire(net: &mut SimNet, fn_id: &str) -> Result<u64, String> {
    sim(net.request_visa(MU, fn_id, "web"))?;
    sim(net.deliver_all())?;
    sim(net.latest_visa(MU, fn_id))
}

fn session(net: &mut SimNet, fn_id: &str) -> Result<Vec<Delivery>, String> {
    sim(net.request_service(MU, fn_id, "web"))?;
    sim(net.deliver_all())
}

fn rejected_with(ds: &[Delivery], reason: &str) -> bool {
    ds.iter().any(|d| d.reason() == Some(reason))
}

fn criterion_1(mu: &mut MuLedger) -> Outcome {
    let mut net = deployment(101, standard(), &[FN1])?;
    let visa_no = acquire(&mut net, FN1)?;
    for s in 0..3 {
        let ds = session(&mut net, FN1)?;
        ensure!(ds.iter().all(Delivery::accepted), "session {s}: {ds:?}");
    }
    let t = net.trace();
    ensure!(
        keys_of(t, MU, KeyKind::SessionMuHn) == keys_of(t, HN, KeyKind::SessionMuHn),
        "SK_MU-HN differs between MU and HN"
    );
    let mu_fn = keys_of(t, MU, KeyKind::SessionMuFn);
    ensure!(mu_fn.len() == 1, "{} SK_MU-FN derivations at the MU", mu_fn.len());
    ensure!(mu_fn == keys_of(t, FN1, KeyKind::SessionMuFn), "SK_MU-FN differs");
    for kind in [KeyKind::ServiceFirst, KeyKind::ServiceSecond, KeyKind::ServiceThird] {
        let (m, f) = (keys_of(t, MU, kind), keys_of(t, FN1, kind));
        ensure!(
            m.len() == 3 && m == f,
            "{}: MU {:?} vs FN {:?}",
            kind.as_str(),
            m.len(),
            f.len()
        );
    }
    ensure!(
        net.mobile(MU).map_err(|e| e.to_string())?.chain_key(FN1, visa_no)
            == net.foreign(FN1).map_err(|e| e.to_string())?.chain_key(visa_no),
        "chain keys diverged"
    );
    let audit = net.audit();
    ensure!(
        audit.mutual_auth(MU, FN1) == 3,
        "{} audited sessions",
        audit.mutual_auth(MU, FN1)
    );
    ensure!(
        audit.trust(MU, FN1) == TrustLevel::Full,
        "trust(MU,FN) = {}",
        audit.trust(MU, FN1).as_str()
    );
    ensure!(
        audit.trust(FN1, MU) == TrustLevel::Full,
        "trust(FN,MU) = {}",
        audit.trust(FN1, MU).as_str()
    );
    let unmet: Vec<_> = audit
        .goal_checklist(MU, FN1, HN)
        .into_iter()
        .filter(|(_, ok)| !ok)
        .collect();
    ensure!(unmet.is_empty(), "unmet goals {unmet:?}");
    ensure!(
        net.receipts().len() == 3 && net.receipts().iter().all(|r| r.intact()),
        "service payloads"
    );
    ensure!(net.violations().is_empty(), "violations {:?}", net.violations());
    mu.observe(1, &net);
    Ok("3 sessions; SK_MU-FN and 9 service keys byte-equal; trust(MU,FN) = full".to_string())
}

fn raw(k: &SymmetricKey) -> &[u8] {
    k.as_bytes()
}

fn criterion_2(mu: &mut MuLedger) -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0x0dac1e);
    let mut checked = 0usize;
    for run in 0..100u64 {
        let mut net = deployment(2_000 + run, standard(), &[FN1])?;
        let visa_no = acquire(&mut net, FN1)?;
        let sessions = rng.gen_range(1..=3);
        for _ in 0..sessions {
            session(&mut net, FN1)?;
        }
        let pass_no = net
            .mobile(MU)
            .map_err(|e| e.to_string())?
            .smart_card()
            .expect("registered")
            .pass_no;
        let t = net.trace();
        let one = |actor: &str, kind: KeyKind| -> Result<SymmetricKey, String> {
            let ks = keys_of(t, actor, kind);
            match ks.as_slice() {
                [k] => Ok(k.clone()),
                _ => Err(format!("run {run}: {actor} derived {} {}", ks.len(), kind.as_str())),
            }
        };
        let nonce = |label: NonceLabel, i: usize| -> Result<Nonce, String> {
            nonces_of(t, FN1, label)
                .get(i)
                .copied()
                .ok_or_else(|| format!("run {run}: no {} #{i}", label.as_str()))
        };

        let master_hn = one(HN, KeyKind::MasterMuHn)?;
        let sk_hn = one(HN, KeyKind::SessionMuHn)?;
        let expect = oracle_session_mu_hn(raw(&master_hn), MU, FN1);
        ensure!(sk_hn.as_bytes() == &expect, "run {run}: SK_MU-HN");
        ensure!(one(MU, KeyKind::SessionMuHn)? == sk_hn, "run {run}: MU SK_MU-HN");

        let (r_mu, r_fn, r2_mu, r2_fn) = (
            nonce(NonceLabel::RMu, 0)?,
            nonce(NonceLabel::RFn, 0)?,
            nonce(NonceLabel::R2Mu, 0)?,
            nonce(NonceLabel::R2Fn, 0)?,
        );
        let sk_mu_fn = one(FN1, KeyKind::SessionMuFn)?;
        let expect = oracle_session_mu_fn(
            pass_no,
            FN1,
            [r_mu.as_bytes(), r_fn.as_bytes(), r2_mu.as_bytes(), r2_fn.as_bytes()],
        );
        ensure!(sk_mu_fn.as_bytes() == &expect, "run {run}: SK_MU-FN");
        ensure!(one(MU, KeyKind::SessionMuFn)? == sk_mu_fn, "run {run}: MU SK_MU-FN");
        checked += 2;

        let visa_master = one(FN1, KeyKind::MasterMuFn)?;
        let mut chain = *sk_mu_fn.as_bytes();
        for i in 0..sessions {
            let at = |actor: &str, kind: KeyKind| keys_of(t, actor, kind).get(i).cloned();
            let sk1 = at(FN1, KeyKind::ServiceFirst).ok_or("missing SK1")?;
            let sk2 = at(FN1, KeyKind::ServiceSecond).ok_or("missing SK2")?;
            let sk3 = at(FN1, KeyKind::ServiceThird).ok_or("missing SK3")?;
            let first = oracle_service_first(&chain, visa_no, pass_no);
            let second = oracle_service_second(&first, raw(&visa_master), nonce(NonceLabel::R1Mu, i)?.as_bytes());
            let third = oracle_service_third(&second, &first, nonce(NonceLabel::R1Fn, i)?.as_bytes());
            ensure!(sk1.as_bytes() == &first, "run {run} session {i}: SK1");
            ensure!(sk2.as_bytes() == &second, "run {run} session {i}: SK2");
            ensure!(sk3.as_bytes() == &third, "run {run} session {i}: SK3");
            for (kind, k) in [
                (KeyKind::ServiceFirst, &sk1),
                (KeyKind::ServiceSecond, &sk2),
                (KeyKind::ServiceThird, &sk3),
            ] {
                ensure!(
                    at(MU, kind).as_ref() == Some(k),
                    "run {run} session {i}: MU {}",
                    kind.as_str()
                );
            }
            chain = third;
            checked += 3;
        }
        mu.observe(2, &net);
    }

    // The same derivations on inputs no protocol run would produce.
    let mut ctx = CryptoContext::new(standard(), 7);
    let key = |rng: &mut ChaCha20Rng| SymmetricKey::from_bytes(rng.gen());
    for i in 0..100 {
        let (master, chain, visa_master) = (key(&mut rng), key(&mut rng), key(&mut rng));
        let n: Vec<Nonce> = (0..6).map(|_| Nonce::from_bytes(rng.gen())).collect();
        let id_mu: String = (0..rng.gen_range(1..20)).map(|_| rng.gen_range('a'..='z')).collect();
        let id_fn: String = (0..rng.gen_range(1..20)).map(|_| rng.gen_range('a'..='z')).collect();
        let (pass_no, visa_no): (u64, u64) = (rng.gen(), rng.gen());
        let lib = |r: Result<SymmetricKey, _>| -> [u8; 32] { *r.expect("valid kdf input").as_bytes() };
        let sk_hn = lib(key_schedule::session_mu_hn(&mut ctx, &master, &id_mu, &id_fn));
        ensure!(
            sk_hn == oracle_session_mu_hn(raw(&master), &id_mu, &id_fn),
            "random {i}: SK_MU-HN"
        );
        let sk_fn = lib(key_schedule::session_mu_fn(
            &mut ctx, pass_no, &id_fn, &n[0], &n[1], &n[2], &n[3],
        ));
        let expect = oracle_session_mu_fn(
            pass_no,
            &id_fn,
            [n[0].as_bytes(), n[1].as_bytes(), n[2].as_bytes(), n[3].as_bytes()],
        );
        ensure!(sk_fn == expect, "random {i}: SK_MU-FN");
        let first = key_schedule::service_first(&mut ctx, &chain, visa_no, pass_no).expect("valid");
        ensure!(
            first.as_bytes() == &oracle_service_first(raw(&chain), visa_no, pass_no),
            "random {i}: SK1"
        );
        let second = key_schedule::service_second(&mut ctx, &first, &visa_master, &n[4]).expect("valid");
        ensure!(
            second.as_bytes() == &oracle_service_second(raw(&first), raw(&visa_master), n[4].as_bytes()),
            "random {i}: SK2"
        );
        let third = key_schedule::service_third(&mut ctx, &second, &first, &n[5]).expect("valid");
        ensure!(
            third.as_bytes() == &oracle_service_third(raw(&second), raw(&first), n[5].as_bytes()),
            "random {i}: SK3"
        );
        checked += 5;
    }
    Ok(format!(
        "100 protocol runs and 100 random input sets; {checked} derivations match the oracle"
    ))
}

fn claim(net: &mut SimNet, rng: &mut ChaCha20Rng, forge_pass_no: bool) -> Result<TokenClaim, String> {
    let pass_no = net
        .mobile(MU)
        .map_err(|e| e.to_string())?
        .smart_card()
        .expect("registered")
        .pass_no;
    let visa_no = sim(net.latest_visa(MU, FN1))?;
    let expiry = net.now().plus(DEFAULT_PASSPORT_VALIDITY_MS);
    let eve = sim(net.attacker_mut(EVE))?;
    Ok(TokenClaim {
        id_mu: MU.to_string(),
        pass_no: if forge_pass_no {
            pass_no + rng.gen_range(1..1000)
        } else {
            pass_no
        },
        visa_no,
        expiry,
        master_key: eve.crypto.random_key(),
    })
}

fn criterion_3(mu: &mut MuLedger) -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let mut net = deployment(303, standard(), &[FN1, FN2])?;
    acquire(&mut net, FN1)?;
    let hn_cert = sim(net.home(HN))?.credentials().cert.clone();
    let fn1_cert = sim(net.foreign(FN1))?.credentials().cert.clone();
    let genuine = sim(net.mobile(MU))?.smart_card().expect("registered").passport.clone();

    let (mut passports, mut passports_accepted) = (0, 0);
    for i in 0..100 {
        let mut req = sim(net.mobile_mut(MU))?
            .begin_visa_acquisition(FN1, "web")
            .map_err(|e| e.to_string())?;
        let forge_pass_no = rng.gen_bool(0.5);
        let tc = claim(&mut net, &mut rng, forge_pass_no)?;
        let eve = sim(net.attacker_mut(EVE))?;
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
            _ => flip_byte(&genuine.0, rng.gen_range(0..genuine.0.len())),
        });
        let before = sim(net.mobile(MU))?.visas().len();
        net.send(MU, FN1, &ProtocolMessage::VisaRequest(req));
        let ds = sim(net.deliver_all())?;
        passports += 1;
        let accepted = sim(net.mobile(MU))?.visas().len() != before || !rejected_with(&ds, "bad_passport");
        passports_accepted += usize::from(accepted);
    }

    let (mut visas, mut visas_accepted) = (0, 0);
    for i in 0..100 {
        let visa_no = sim(net.latest_visa(MU, FN1))?;
        let mut req = sim(net.mobile_mut(MU))?
            .begin_service(FN1, visa_no, "web")
            .map_err(|e| e.to_string())?;
        let tc = claim(&mut net, &mut rng, false)?;
        let eve = sim(net.attacker_mut(EVE))?;
        req.visa = SealedVisa(match i % 2 {
            0 => forge_token(
                &mut eve.crypto,
                TokenKind::Visa,
                &eve.keys,
                &fn1_cert.subject_public_key,
                &tc,
            ),
            _ => relabel_token(
                &mut eve.crypto,
                TokenKind::Visa,
                &fn1_cert.subject_public_key,
                &tc,
                &fn1_cert.ca_signature,
            ),
        });
        let before = net.audit().sessions().len();
        net.send(MU, FN1, &ProtocolMessage::ServiceRequest(req));
        let ds = sim(net.deliver_all())?;
        visas += 1;
        let accepted = net.audit().sessions().len() != before
            || ds.iter().any(|d| d.outcome.as_deref() == Ok("service granted"))
            || !rejected_with(&ds, "bad_visa");
        visas_accepted += usize::from(accepted);
    }
    ensure!(
        passports_accepted == 0 && visas_accepted == 0,
        "{passports_accepted} of {passports} passports and {visas_accepted} of {visas} visas not rejected"
    );
    mu.observe(3, &net);
    Ok(format!(
        "0 of {passports} forged passports and 0 of {visas} forged visas accepted"
    ))
}

fn indices(net: &SimNet, tag: u8, from: &str) -> Vec<usize> {
    net.trace()
        .messages
        .iter()
        .filter(|m| m.from == from && m.bytes.first() == Some(&tag))
        .map(|m| m.index)
        .collect()
}

fn criterion_4(mu: &mut MuLedger) -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    let (mut replays, mut accepted) = (0usize, 0usize);
    let (mut stale, mut stale_ok, mut proof, mut proof_ok) = (0, 0, 0, 0);
    for t in 0..50u64 {
        let mut net = deployment(4_000 + t, standard(), &[FN1])?;
        acquire(&mut net, FN1)?;
        for _ in 0..rng.gen_range(1..=4) {
            session(&mut net, FN1)?;
        }
        for idx in indices(&net, 0x05, MU) {
            let before = net.audit().mutual_auth(MU, FN1);
            let d = sim(net.replay(idx, FN1))?;
            sim(net.deliver_all())?;
            replays += 1;
            proof += 1;
            accepted += usize::from(d.accepted() || net.audit().mutual_auth(MU, FN1) != before);
            proof_ok += usize::from(d.reason() == Some("bad_proof"));
        }
        net.advance_clock(DEFAULT_FRESHNESS_WINDOW_MS + 1 + rng.gen_range(0..3_600_000));
        for idx in indices(&net, 0x01, MU) {
            let d = sim(net.replay(idx, FN1))?;
            sim(net.deliver_all())?;
            replays += 1;
            stale += 1;
            accepted += usize::from(d.accepted());
            stale_ok += usize::from(d.reason() == Some("stale"));
        }
        for (tag, from, to) in [(0x02, FN1, HN), (0x04, FN1, MU), (0x06, FN1, MU)] {
            for idx in indices(&net, tag, from) {
                let visas = sim(net.mobile(MU))?.visas().len();
                let sessions = net.audit().mutual_auth(MU, FN1);
                let d = sim(net.replay(idx, to))?;
                sim(net.deliver_all())?;
                replays += 1;
                accepted += usize::from(
                    d.accepted()
                        || sim(net.mobile(MU))?.visas().len() != visas
                        || net.audit().mutual_auth(MU, FN1) != sessions,
                );
            }
        }
        ensure!(net.violations().is_empty(), "trace {t}: {:?}", net.violations());
        mu.observe(4, &net);
    }
    ensure!(
        stale_ok == stale,
        "{stale_ok} of {stale} late visa requests rejected as stale"
    );
    ensure!(
        proof_ok == proof,
        "{proof_ok} of {proof} service replays rejected as bad_proof"
    );
    ensure!(accepted == 0, "{accepted} of {replays} replays accepted");
    Ok(format!(
        "50 traces: {stale}/{stale} stale, {proof}/{proof} bad_proof, 0 of {replays} replays accepted"
    ))
}

/// Offset of the identity bytes inside a symmetric ciphertext of an
/// `HnChallenge` naming `id_fn`. Both symmetric layers put a 12-byte nonce
/// first and keep plaintext offsets.
fn id_fn_offset(id_fn: &str) -> usize {
    let pt = HnChallenge {
        id_fn: id_fn.to_string(),
        r_mu: Nonce::from_bytes([0; 16]),
        t_mu: pvkit::crypto::Timestamp(0),
    }
    .encode();
    12 + pt
        .windows(id_fn.len())
        .position(|w| w == id_fn.as_bytes())
        .expect("id present")
}

/// Rewrites `from` to `to` inside a challenge ciphertext by XOR, which
/// succeeds against any stream cipher without a tag.
fn rewrite_id(cipher: &[u8], from: &str, to: &str) -> Vec<u8> {
    let mut out = cipher.to_vec();
    let at = id_fn_offset(from);
    for (i, (a, b)) in from.bytes().zip(to.bytes()).enumerate() {
        out[at + i] ^= a ^ b;
    }
    out
}

/// One interception of the visa acquisition flow; returns whether the HN
/// answered id_mismatch and whether a Visa was issued anyway.
fn mitm_trial(net: &mut SimNet, mode: usize) -> Result<(bool, bool), String> {
    let before = sim(net.mobile(MU))?.visas().len();
    let idx = sim(net.request_visa(MU, FN1, "web"))?;
    let ds = match mode {
        // Divert the MU's request to another FN, which relays it with its
        // own certificate.
        0 => {
            sim(net.drop_next())?;
            let mut ds = vec![sim(net.replay(idx, FN2))?];
            ds.extend(sim(net.deliver_all())?);
            ds
        }
        // Rewrite id_FN inside the relayed challenge.
        1 => {
            sim(net.deliver_next())?;
            let env = sim(net.drop_next())?;
            let Ok(ProtocolMessage::ForwardToHn(mut fwd)) = ProtocolMessage::decode(&env.bytes) else {
                return Err("FN did not relay a ForwardToHn".into());
            };
            fwd.cipher_to_hn = rewrite_id(&fwd.cipher_to_hn, FN1, FN2);
            net.send(&env.from, &env.to, &ProtocolMessage::ForwardToHn(fwd));
            sim(net.deliver_all())?
        }
        // Swap in another FN's certificate on the relayed request.
        _ => {
            sim(net.deliver_next())?;
            let env = sim(net.drop_next())?;
            let Ok(ProtocolMessage::ForwardToHn(mut fwd)) = ProtocolMessage::decode(&env.bytes) else {
                return Err("FN did not relay a ForwardToHn".into());
            };
            fwd.cert_fn = sim(net.foreign(FN2))?.credentials().cert.clone();
            net.send(&env.from, &env.to, &ProtocolMessage::ForwardToHn(fwd));
            sim(net.deliver_all())?
        }
    };
    let hn_rejected = ds.iter().any(|d| d.to == HN && d.reason() == Some("id_mismatch"));
    let granted = sim(net.mobile(MU))?.visas().len() != before;
    Ok((hn_rejected, granted))
}

fn criterion_5(mu: &mut MuLedger) -> Outcome {
    let mut net = deployment(505, standard(), &[FN1, FN2])?;
    let (mut detected, mut granted) = (0, 0);
    let mut per_mode = [0usize; 3];
    for j in 0..50 {
        let (ok, g) = mitm_trial(&mut net, j % 3)?;
        detected += usize::from(ok);
        granted += usize::from(g);
        per_mode[j % 3] += usize::from(ok);
    }
    ensure!(net.violations().is_empty(), "{:?}", net.violations());
    mu.observe(5, &net);
    ensure!(
        detected == 50 && granted == 0,
        "{detected} of 50 trials rejected as id_mismatch, {granted} visas issued"
    );

    // Without an authenticated symmetric layer the rewrite decrypts cleanly,
    // so only the certificate-vs-plaintext comparison stands in the way.
    let mut weak = deployment(506, Arc::new(UnauthenticatedSymmetric(StandardSuite)), &[FN1, FN2])?;
    let mut weak_ok = 0;
    for _ in 0..10 {
        let (ok, g) = mitm_trial(&mut weak, 1)?;
        weak_ok += usize::from(ok && !g);
    }
    ensure!(weak_ok == 10, "comparison alone caught {weak_ok} of 10 rewrites");
    Ok(format!(
        "50/50 id_mismatch (redirect {}, rewritten id {}, swapped cert {}); 10/10 rewrites caught by the comparison alone",
        per_mode[0], per_mode[1], per_mode[2]
    ))
}

fn criterion_6(mu: &mut MuLedger) -> Outcome {
    let mut net = deployment(606, standard(), &[FN1])?;
    acquire(&mut net, FN1)?;
    for _ in 0..10 {
        session(&mut net, FN1)?;
    }
    let t = net.trace();
    let mut keys = BTreeSet::new();
    for kind in [KeyKind::ServiceFirst, KeyKind::ServiceSecond, KeyKind::ServiceThird] {
        let (m, f) = (keys_of(t, MU, kind), keys_of(t, FN1, kind));
        ensure!(m.len() == 10 && m == f, "{} not agreed over 10 sessions", kind.as_str());
        keys.extend(f);
    }
    ensure!(keys.len() == 30, "{} distinct of 30 session keys", keys.len());
    let report = audit_key_freshness(t, 10).map_err(|e| e.to_string())?;
    ensure!(
        report.distinct_keys == 30,
        "audit saw {} distinct keys",
        report.distinct_keys
    );

    let masters = keys_of(t, FN1, KeyKind::MasterMuFn);
    ensure!(
        masters.len() == 1 && masters == keys_of(t, MU, KeyKind::MasterMuFn),
        "K_MU-FN not agreed"
    );
    let master = &masters[0];
    for (actor, used) in &t.traffic_keys {
        ensure!(!used.contains(master), "{actor} used K_MU-FN as a traffic key");
    }
    // K_MU-FN reaches the MU only inside the key-delivery field.
    let grant = t
        .messages
        .iter()
        .find_map(|m| match ProtocolMessage::decode(&m.bytes) {
            Ok(ProtocolMessage::VisaGrant(g)) => Some(g),
            _ => None,
        })
        .ok_or("no VisaGrant captured")?;
    let sk_mu_fn = keys_of(t, FN1, KeyKind::SessionMuFn)[0].clone();
    let mut ctx = CryptoContext::new(standard(), 0);
    let delivered = ctx
        .dec_sym(&sk_mu_fn, &grant.key_delivery)
        .ok()
        .and_then(|pt| KeyDelivery::decode(&pt).ok())
        .ok_or("key delivery does not open under SK_MU-FN")?;
    ensure!(&delivered.master_key == master, "key delivery carries another key");
    let leaked = t
        .messages
        .iter()
        .filter(|m| m.bytes.windows(32).any(|w| w == master.as_bytes()))
        .count();
    ensure!(leaked == 0, "K_MU-FN in clear in {leaked} messages");
    mu.observe(6, &net);
    Ok(format!(
        "30 of 30 keys pairwise distinct; K_MU-FN in no traffic-key set across {} actors and never in clear",
        t.traffic_keys.len()
    ))
}

fn ledger_valid(net: &SimNet, fn_id: &str, visa_no: u64) -> Result<bool, String> {
    sim(net.foreign(fn_id))?
        .ledger()
        .get(&visa_no)
        .map(|r| r.valid)
        .ok_or_else(|| format!("{fn_id} has no ledger row {visa_no}"))
}

fn serve_held(net: &mut SimNet, fn_id: &str, req: wire::ServiceRequest) -> Result<Vec<Delivery>, String> {
    net.send(MU, fn_id, &ProtocolMessage::ServiceRequest(req));
    sim(net.deliver_all())
}

fn criterion_7(mu: &mut MuLedger) -> Outcome {
    let mut net = deployment(707, standard(), &[FN1, FN2])?;
    let a = acquire(&mut net, FN1)?;
    let b = acquire(&mut net, FN1)?;
    let c = acquire(&mut net, FN2)?;
    ensure!(a != b, "fn1 issued one number twice");
    ensure!(
        sim(net.mobile(MU))?.visas().len() == 3,
        "MU holds {} visas",
        sim(net.mobile(MU))?.visas().len()
    );
    for f in [FN1, FN2] {
        let ds = session(&mut net, f)?;
        ensure!(ds.iter().all(Delivery::accepted), "{f} before revocation: {ds:?}");
    }

    // Visa revocation of `a` only.
    let held_a = sim(net.mobile_mut(MU))?
        .begin_service(FN1, a, "web")
        .map_err(|e| e.to_string())?;
    let revoke = sim(net.mobile_mut(MU))?
        .revoke_visa(FN1, a)
        .map_err(|e| e.to_string())?;
    net.send(MU, FN1, &ProtocolMessage::VisaRevoke(revoke));
    let ds = sim(net.deliver_all())?;
    ensure!(ds.iter().all(Delivery::accepted), "visa revoke: {ds:?}");
    ensure!(!ledger_valid(&net, FN1, a)?, "visa {a} still valid");
    let ds = serve_held(&mut net, FN1, held_a)?;
    ensure!(rejected_with(&ds, "revoked"), "revoked visa served: {ds:?}");
    ensure!(ledger_valid(&net, FN1, b)?, "visa {b} lost validity with {a}");
    let ds = session(&mut net, FN1)?;
    ensure!(ds.iter().all(Delivery::accepted), "sibling visa refused: {ds:?}");

    // Passport revocation covers every remaining Visa at every FN.
    let held_b = sim(net.mobile_mut(MU))?
        .begin_service(FN1, b, "web")
        .map_err(|e| e.to_string())?;
    let held_c = sim(net.mobile_mut(MU))?
        .begin_service(FN2, c, "web")
        .map_err(|e| e.to_string())?;
    sim(net.revoke_passport(HN, MU))?;
    let ds = sim(net.deliver_all())?;
    ensure!(
        ds.len() == 2 && ds.iter().all(Delivery::accepted),
        "passport revoke: {ds:?}"
    );
    ensure!(
        !ledger_valid(&net, FN1, b)? && !ledger_valid(&net, FN2, c)?,
        "ledger still valid"
    );
    for (f, held) in [(FN1, held_b), (FN2, held_c)] {
        let ds = serve_held(&mut net, f, held)?;
        ensure!(rejected_with(&ds, "revoked"), "{f} served a revoked passport: {ds:?}");
    }
    for f in [FN1, FN2] {
        let ds = session(&mut net, f)?;
        ensure!(rejected_with(&ds, "revoked"), "{f} fresh session: {ds:?}");
    }
    sim(net.request_visa(MU, FN2, "web"))?;
    let ds = sim(net.deliver_all())?;
    ensure!(
        rejected_with(&ds, "revoked"),
        "new visa issued under revoked passport: {ds:?}"
    );
    ensure!(net.violations().is_empty(), "{:?}", net.violations());
    mu.observe(7, &net);
    Ok(format!(
        "visa {a} revoked alone, then passport revoked; ledger valid=false for fn1/{a}, fn1/{b}, fn2/{c}; all service refused as revoked"
    ))
}

fn criterion_8(mu: &MuLedger) -> Outcome {
    let covered: BTreeSet<u32> = mu.rows.iter().map(|r| r.0).collect();
    ensure!(
        covered == (1..=7).collect(),
        "counters only observed for criteria {covered:?}"
    );
    let asym: u64 = mu.rows.iter().map(|r| r.1).sum();
    let sym: u64 = mu.rows.iter().map(|r| r.2).sum();
    ensure!(asym == 0, "MU performed {asym} asymmetric operations");
    ensure!(sym > 0, "MU counters never moved");
    // The counters do register asymmetric work where it happens.
    let net = deployment(808, standard(), &[FN1])?;
    let hn = sim(net.home(HN))?.crypto().counts().asymmetric();
    ensure!(hn > 0, "HN counter shows no asymmetric operations");
    Ok(format!(
        "0 asymmetric and {sym} symmetric MU operations across {} deployments",
        mu.rows.len()
    ))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(909);
    let samples: Vec<Vec<u8>> = (0..VARIANTS).map(|v| random_message(&mut rng, v).encode()).collect();
    let (mut panics, mut decoded) = (0usize, 0usize);
    for i in 0..10_000 {
        let input: Vec<u8> = match i % 4 {
            0 => (0..rng.gen_range(0..512)).map(|_| rng.gen()).collect(),
            1 => {
                let mut b: Vec<u8> = (0..rng.gen_range(1..256)).map(|_| rng.gen()).collect();
                b[0] = rng.gen_range(1..=9);
                b
            }
            2 => {
                let base = &samples[rng.gen_range(0..VARIANTS)];
                let mut b = base.clone();
                for _ in 0..rng.gen_range(1..4) {
                    let p = rng.gen_range(0..b.len());
                    b[p] = rng.gen();
                }
                b
            }
            _ => {
                let base = &samples[rng.gen_range(0..VARIANTS)];
                let mut b = base[..rng.gen_range(0..=base.len())].to_vec();
                if rng.gen() {
                    b.extend((0..rng.gen_range(1..16)).map(|_| rng.gen::<u8>()));
                }
                b
            }
        };
        match catch_unwind(|| {
            let r = ProtocolMessage::decode(&input);
            let _ = wire::annotate(&input);
            r.is_ok()
        }) {
            Ok(ok) => decoded += usize::from(ok),
            Err(_) => panics += 1,
        }
    }
    ensure!(panics == 0, "{panics} of 10000 inputs crashed the decoder");

    let mut per_variant = [0usize; VARIANTS];
    for i in 0..1_000 {
        let v = i % VARIANTS;
        let msg = random_message(&mut rng, v);
        let bytes = msg.encode();
        let back = ProtocolMessage::decode(&bytes).map_err(|e| format!("round trip {i} ({}): {e}", msg.name()))?;
        ensure!(back == msg, "round trip {i} ({}) changed the message", msg.name());
        ensure!(
            back.encode() == bytes,
            "round trip {i} ({}) changed the bytes",
            msg.name()
        );
        per_variant[v] += 1;
    }
    ensure!(per_variant.iter().all(|n| *n >= 111), "uneven coverage {per_variant:?}");
    Ok(format!(
        "10000 fuzz inputs, 0 crashes ({decoded} happened to decode); 1000 round trips, at least 111 per variant"
    ))
}

fn criterion_10() -> Outcome {
    let mut runs = 0;
    for (name, text) in scenario::BUNDLED {
        let sc = Scenario::parse(text, Path::new(".")).map_err(|e| format!("{name}: {e}"))?;
        for seed in [None, Some(0xdead_beef)] {
            let render = || -> Result<String, String> {
                let run = scenario::run_scenario(&sc, seed, standard()).map_err(|e| format!("{name}: {e}"))?;
                Ok(run.trace().render())
            };
            let (x, y) = (render()?, render()?);
            ensure!(x == y, "{name} seed {seed:?}: traces differ");
            runs += 2;
        }
    }
    // Seeds actually steer the run.
    let sc = Scenario::parse(
        scenario::bundled("happy_path").ok_or("happy_path missing")?,
        Path::new("."),
    )
    .map_err(|e| e.to_string())?;
    let a = scenario::run_scenario(&sc, Some(1), standard()).map_err(|e| e.to_string())?;
    let b = scenario::run_scenario(&sc, Some(2), standard()).map_err(|e| e.to_string())?;
    ensure!(
        a.trace().render() != b.trace().render(),
        "seeds 1 and 2 gave the same trace"
    );

    let cfg = AttackConfig {
        forgeries: 6,
        replay_traces: 3,
        mitm_trials: 4,
        sessions: 4,
    };
    let r1 = sim(run_attack_suite(10, standard(), &cfg))?.render();
    let r2 = sim(run_attack_suite(10, standard(), &cfg))?.render();
    ensure!(r1 == r2, "attack suite reports differ");
    Ok(format!(
        "{runs} scenario runs over {} bundled scenarios reproduced byte for byte; attack report reproduced",
        scenario::BUNDLED.len()
    ))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut mu = MuLedger::default();
    let mut results: Vec<(u32, &str, Outcome, Duration)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut(&mut MuLedger) -> Outcome, mu: &mut MuLedger| {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(mu))).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        results.push((n, name, outcome, t.elapsed()));
    };
    run(1, "happy path", &mut criterion_1, &mut mu);
    run(2, "key derivation oracle", &mut criterion_2, &mut mu);
    run(3, "forgery resistance", &mut criterion_3, &mut mu);
    run(4, "replay resistance", &mut criterion_4, &mut mu);
    run(5, "MITM id binding", &mut criterion_5, &mut mu);
    run(6, "key freshness", &mut criterion_6, &mut mu);
    run(7, "revocation", &mut criterion_7, &mut mu);
    run(8, "MU symmetric-only", &mut |m: &mut MuLedger| criterion_8(m), &mut mu);
    run(9, "codec robustness", &mut |_: &mut MuLedger| criterion_9(), &mut mu);
    run(10, "determinism", &mut |_: &mut MuLedger| criterion_10(), &mut mu);

    let mut failed = 0;
    for (n, name, outcome, took) in &results {
        let (mark, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{mark} criterion {n:>2} {name}: {detail} [{:.2}s]", took.as_secs_f64());
    }
    let total = start.elapsed();
    let in_budget = total < TIME_BUDGET;
    println!(
        "{} acceptance: {} of {} criteria passed in {:.2}s (budget {}s)",
        if failed == 0 && in_budget { "PASS" } else { "FAIL" },
        results.len() - failed,
        results.len(),
        total.as_secs_f64(),
        TIME_BUDGET.as_secs()
    );
    if failed == 0 && in_budget {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
