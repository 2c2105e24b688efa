//! Line-oriented scenario scripts.
//!
//! ```text
//! # comment
//! seed 7
//! ca ca
//! hn hn
//! fn fn1
//! mu alice hn
//! attacker eve
//! register alice
//! request_visa alice fn1 web
//! deliver_all
//! expect ok
//! service alice fn1 web
//! deliver_all
//! expect trust alice fn1 full
//! ```
//!
//! Declarations: `seed N`, `ca NAME`, `hn NAME`, `fn NAME`, `mu NAME HOME`,
//! `attacker NAME`, `provisioned DIR`.
//!
//! Steps: `register MU [VALIDITY_MS]`, `request_visa MU FN [DESC]`,
//! `service MU FN [DESC]`, `revoke_passport HN MU`, `revoke_visa MU FN`,
//! `policy FN accept_all|deny_all|deny_hn HN|deny_pass N`, `deliver`,
//! `deliver_all`, `drop`, `duplicate`, `delay`, `tamper BYTE`,
//! `inject FROM TO HEX`, `advance_clock MS`, `replay INDEX TO`.
//!
//! Assertions: `expect ok`, `expect reject REASON`,
//! `expect trust A B none|partial|full`, `expect mutual_auth MU FN [N]`,
//! `expect ledger FN VISA valid|revoked`, `expect visas MU N`,
//! `expect keys_agree MU FN`, `expect goals MU FN HN`,
//! `expect key_freshness [N]`, `expect no_violations`, `expect queue N`,
//! `expect mu_asymmetric MU N`.
//!
//! `expect ok` and `expect reject` look at the deliveries made by the most
//! recent step.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use super::audit::audit_key_freshness;
use super::network::{Delivery, SimError, SimNet, DEFAULT_PASSPORT_VALIDITY_MS};
use super::provision;
use super::trace::{Trace, TraceEntry};
use crate::actors::foreign_network::Policy;
use crate::actors::TrustLevel;
use crate::crypto::CryptoSuite;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: undeclared actor {name:?}")]
    UndeclaredActor { line: usize, name: String },
    #[error("line {line}: {name:?} is not a {expected}")]
    WrongRole {
        line: usize,
        name: String,
        expected: &'static str,
    },
    #[error("line {line}: {source}")]
    Runtime { line: usize, source: SimError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Ca,
    Home,
    Foreign,
    Mobile,
    Attacker,
}

impl Role {
    fn noun(self) -> &'static str {
        match self {
            Role::Ca => "CA",
            Role::Home => "home network",
            Role::Foreign => "foreign network",
            Role::Mobile => "mobile user",
            Role::Attacker => "attacker",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decl {
    Actor { role: Role, name: String },
    Mobile { name: String, home: String },
    Provisioned(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyRule {
    AcceptAll,
    DenyAll,
    DenyHome(String),
    DenyPassport(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Register {
        mu: String,
        validity_ms: u64,
    },
    RequestVisa {
        mu: String,
        fn_id: String,
        descriptor: String,
    },
    Service {
        mu: String,
        fn_id: String,
        descriptor: String,
    },
    RevokePassport {
        hn: String,
        mu: String,
    },
    RevokeVisa {
        mu: String,
        fn_id: String,
    },
    Policy {
        fn_id: String,
        policy: PolicyRule,
    },
    Deliver,
    DeliverAll,
    Drop,
    Duplicate,
    Delay,
    Tamper(usize),
    Inject {
        from: String,
        to: String,
        bytes: Vec<u8>,
    },
    AdvanceClock(u64),
    Replay {
        index: usize,
        to: String,
    },
    Expect(Expectation),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    Ok,
    Reject(String),
    Trust {
        from: String,
        to: String,
        level: TrustLevel,
    },
    MutualAuth {
        mu: String,
        fn_id: String,
        at_least: usize,
    },
    Ledger {
        fn_id: String,
        visa_no: u64,
        valid: bool,
    },
    Visas {
        mu: String,
        count: usize,
    },
    KeysAgree {
        mu: String,
        fn_id: String,
    },
    Goals {
        mu: String,
        fn_id: String,
        hn: String,
    },
    KeyFreshness {
        min_sessions: usize,
    },
    NoViolations,
    Queue(usize),
    MuAsymmetric {
        mu: String,
        count: u64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub seed: Option<u64>,
    pub decls: Vec<(usize, Decl)>,
    pub steps: Vec<(usize, Step)>,
}

fn parse_num<T: std::str::FromStr>(line: usize, word: &str) -> Result<T, ScenarioError> {
    word.parse().map_err(|_| ScenarioError::Parse {
        line,
        reason: format!("expected a number, found {word:?}"),
    })
}

impl Scenario {
    /// Parses a script. Relative `provisioned` paths resolve against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut sc = Scenario::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let w: Vec<&str> = content.split_whitespace().collect();
            let s = |x: &str| x.to_string();
            let bad = |reason: String| ScenarioError::Parse { line, reason };
            let desc = |rest: &[&str]| {
                if rest.is_empty() {
                    "default".to_string()
                } else {
                    rest.join(" ")
                }
            };
            let actor = |role, name: &str| Decl::Actor { role, name: s(name) };
            match w.as_slice() {
                ["seed", n] => sc.seed = Some(parse_num(line, n)?),
                ["ca", n] => sc.decls.push((line, actor(Role::Ca, n))),
                ["hn", n] => sc.decls.push((line, actor(Role::Home, n))),
                ["fn", n] => sc.decls.push((line, actor(Role::Foreign, n))),
                ["attacker", n] => sc.decls.push((line, actor(Role::Attacker, n))),
                ["mu", n, home] => sc.decls.push((
                    line,
                    Decl::Mobile {
                        name: s(n),
                        home: s(home),
                    },
                )),
                ["provisioned", dir] => sc.decls.push((line, Decl::Provisioned(base_dir.join(dir)))),
                ["register", mu] => sc.steps.push((
                    line,
                    Step::Register {
                        mu: s(mu),
                        validity_ms: DEFAULT_PASSPORT_VALIDITY_MS,
                    },
                )),
                ["register", mu, ms] => sc.steps.push((
                    line,
                    Step::Register {
                        mu: s(mu),
                        validity_ms: parse_num(line, ms)?,
                    },
                )),
                ["request_visa", mu, f, rest @ ..] => sc.steps.push((
                    line,
                    Step::RequestVisa {
                        mu: s(mu),
                        fn_id: s(f),
                        descriptor: desc(rest),
                    },
                )),
                ["service", mu, f, rest @ ..] => sc.steps.push((
                    line,
                    Step::Service {
                        mu: s(mu),
                        fn_id: s(f),
                        descriptor: desc(rest),
                    },
                )),
                ["revoke_passport", hn, mu] => sc.steps.push((line, Step::RevokePassport { hn: s(hn), mu: s(mu) })),
                ["revoke_visa", mu, f] => sc.steps.push((line, Step::RevokeVisa { mu: s(mu), fn_id: s(f) })),
                ["policy", f, rest @ ..] => {
                    let policy = match rest {
                        ["accept_all"] => PolicyRule::AcceptAll,
                        ["deny_all"] => PolicyRule::DenyAll,
                        ["deny_hn", hn] => PolicyRule::DenyHome(s(hn)),
                        ["deny_pass", n] => PolicyRule::DenyPassport(parse_num(line, n)?),
                        _ => return Err(bad(format!("unknown policy {:?}", rest.join(" ")))),
                    };
                    sc.steps.push((line, Step::Policy { fn_id: s(f), policy }));
                }
                ["deliver"] => sc.steps.push((line, Step::Deliver)),
                ["deliver_all"] => sc.steps.push((line, Step::DeliverAll)),
                ["drop"] => sc.steps.push((line, Step::Drop)),
                ["duplicate"] => sc.steps.push((line, Step::Duplicate)),
                ["delay"] => sc.steps.push((line, Step::Delay)),
                ["tamper", b] => sc.steps.push((line, Step::Tamper(parse_num(line, b)?))),
                ["inject", from, to, h] => {
                    let bytes = hex::decode(h).map_err(|e| bad(format!("bad hex: {e}")))?;
                    sc.steps.push((
                        line,
                        Step::Inject {
                            from: s(from),
                            to: s(to),
                            bytes,
                        },
                    ));
                }
                ["advance_clock", ms] => sc.steps.push((line, Step::AdvanceClock(parse_num(line, ms)?))),
                ["replay", idx, to] => sc.steps.push((
                    line,
                    Step::Replay {
                        index: parse_num(line, idx)?,
                        to: s(to),
                    },
                )),
                ["expect", rest @ ..] => sc.steps.push((line, Step::Expect(parse_expect(line, rest)?))),
                _ => return Err(bad(format!("unrecognised line {content:?}"))),
            }
        }
        Ok(sc)
    }

    /// Checks that every actor a step names was declared with a fitting role.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut roles: BTreeMap<String, Role> = BTreeMap::new();
        for (line, decl) in &self.decls {
            match decl {
                Decl::Actor { role, name } => {
                    roles.insert(name.clone(), *role);
                }
                Decl::Mobile { name, home } => {
                    require(&roles, *line, home, &[Role::Home])?;
                    roles.insert(name.clone(), Role::Mobile);
                }
                Decl::Provisioned(dir) => {
                    let loaded = provision::load(dir).map_err(|e| ScenarioError::Runtime {
                        line: *line,
                        source: SimError::Provision(e),
                    })?;
                    roles.insert(loaded.ca_name.clone(), Role::Ca);
                    for (c, _) in &loaded.homes {
                        roles.insert(c.id.clone(), Role::Home);
                    }
                    for c in &loaded.foreigns {
                        roles.insert(c.id.clone(), Role::Foreign);
                    }
                    for (name, _, _) in &loaded.mobiles {
                        roles.insert(name.clone(), Role::Mobile);
                    }
                }
            }
        }
        use Role::*;
        let any = [Ca, Home, Foreign, Mobile, Attacker];
        let bus = [Home, Foreign, Mobile, Attacker];
        for (line, step) in &self.steps {
            let need = |name: &str, allowed: &[Role]| require(&roles, *line, name, allowed);
            match step {
                Step::Register { mu, .. } => need(mu, &[Mobile])?,
                Step::RequestVisa { mu, fn_id, .. }
                | Step::Service { mu, fn_id, .. }
                | Step::RevokeVisa { mu, fn_id } => {
                    need(mu, &[Mobile])?;
                    need(fn_id, &[Foreign])?;
                }
                Step::RevokePassport { hn, mu } => {
                    need(hn, &[Home])?;
                    need(mu, &[Mobile])?;
                }
                Step::Policy { fn_id, .. } => need(fn_id, &[Foreign])?,
                Step::Inject { from, to, .. } => {
                    need(from, &any)?;
                    need(to, &bus)?;
                }
                Step::Replay { to, .. } => need(to, &bus)?,
                Step::Expect(e) => match e {
                    Expectation::Trust { from, to, .. } => {
                        need(from, &any)?;
                        need(to, &any)?;
                    }
                    Expectation::MutualAuth { mu, fn_id, .. } | Expectation::KeysAgree { mu, fn_id } => {
                        need(mu, &[Mobile])?;
                        need(fn_id, &[Foreign])?;
                    }
                    Expectation::Ledger { fn_id, .. } => need(fn_id, &[Foreign])?,
                    Expectation::Visas { mu, .. } | Expectation::MuAsymmetric { mu, .. } => need(mu, &[Mobile])?,
                    Expectation::Goals { mu, fn_id, hn } => {
                        need(mu, &[Mobile])?;
                        need(fn_id, &[Foreign])?;
                        need(hn, &[Home])?;
                    }
                    _ => {}
                },
                _ => {}
            }
        }
        Ok(())
    }
}

fn require(roles: &BTreeMap<String, Role>, line: usize, name: &str, allowed: &[Role]) -> Result<(), ScenarioError> {
    match roles.get(name) {
        None => Err(ScenarioError::UndeclaredActor {
            line,
            name: name.to_string(),
        }),
        Some(r) if allowed.contains(r) => Ok(()),
        Some(_) => Err(ScenarioError::WrongRole {
            line,
            name: name.to_string(),
            expected: allowed[0].noun(),
        }),
    }
}

fn parse_expect(line: usize, w: &[&str]) -> Result<Expectation, ScenarioError> {
    let s = |x: &str| x.to_string();
    let bad = || ScenarioError::Parse {
        line,
        reason: format!("unrecognised assertion {:?}", w.join(" ")),
    };
    Ok(match w {
        ["ok"] => Expectation::Ok,
        ["reject", r] => Expectation::Reject(s(r)),
        ["trust", a, b, level] => Expectation::Trust {
            from: s(a),
            to: s(b),
            level: TrustLevel::parse(level).ok_or_else(bad)?,
        },
        ["mutual_auth", mu, f] => Expectation::MutualAuth {
            mu: s(mu),
            fn_id: s(f),
            at_least: 1,
        },
        ["mutual_auth", mu, f, n] => Expectation::MutualAuth {
            mu: s(mu),
            fn_id: s(f),
            at_least: parse_num(line, n)?,
        },
        ["ledger", f, v, state @ ("valid" | "revoked")] => Expectation::Ledger {
            fn_id: s(f),
            visa_no: parse_num(line, v)?,
            valid: *state == "valid",
        },
        ["visas", mu, n] => Expectation::Visas {
            mu: s(mu),
            count: parse_num(line, n)?,
        },
        ["keys_agree", mu, f] => Expectation::KeysAgree { mu: s(mu), fn_id: s(f) },
        ["goals", mu, f, hn] => Expectation::Goals {
            mu: s(mu),
            fn_id: s(f),
            hn: s(hn),
        },
        ["key_freshness"] => Expectation::KeyFreshness { min_sessions: 1 },
        ["key_freshness", n] => Expectation::KeyFreshness {
            min_sessions: parse_num(line, n)?,
        },
        ["no_violations"] => Expectation::NoViolations,
        ["queue", n] => Expectation::Queue(parse_num(line, n)?),
        ["mu_asymmetric", mu, n] => Expectation::MuAsymmetric {
            mu: s(mu),
            count: parse_num(line, n)?,
        },
        _ => return Err(bad()),
    })
}

/// Outcome of one assertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionResult {
    pub line: usize,
    pub text: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug)]
pub struct ScenarioRun {
    pub seed: u64,
    pub net: SimNet,
    pub assertions: Vec<AssertionResult>,
}

impl ScenarioRun {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn trace(&self) -> &Trace {
        self.net.trace()
    }
}

fn policy_of(rule: &PolicyRule) -> Policy {
    match rule {
        PolicyRule::AcceptAll => Policy::AcceptAll,
        PolicyRule::DenyAll => Policy::DenyAll,
        PolicyRule::DenyHome(hn) => Policy::DenyList {
            home_networks: BTreeSet::from([hn.clone()]),
            passports: BTreeSet::new(),
        },
        PolicyRule::DenyPassport(n) => Policy::DenyList {
            home_networks: BTreeSet::new(),
            passports: BTreeSet::from([*n]),
        },
    }
}

fn describe(e: &Expectation) -> String {
    match e {
        Expectation::Ok => "ok".to_string(),
        Expectation::Reject(r) => format!("reject {r}"),
        Expectation::Trust { from, to, level } => format!("trust {from} {to} {}", level.as_str()),
        Expectation::MutualAuth { mu, fn_id, at_least } => format!("mutual_auth {mu} {fn_id} {at_least}"),
        Expectation::Ledger { fn_id, visa_no, valid } => {
            format!("ledger {fn_id} {visa_no} {}", if *valid { "valid" } else { "revoked" })
        }
        Expectation::Visas { mu, count } => format!("visas {mu} {count}"),
        Expectation::KeysAgree { mu, fn_id } => format!("keys_agree {mu} {fn_id}"),
        Expectation::Goals { mu, fn_id, hn } => format!("goals {mu} {fn_id} {hn}"),
        Expectation::KeyFreshness { min_sessions } => format!("key_freshness {min_sessions}"),
        Expectation::NoViolations => "no_violations".to_string(),
        Expectation::Queue(n) => format!("queue {n}"),
        Expectation::MuAsymmetric { mu, count } => format!("mu_asymmetric {mu} {count}"),
    }
}

fn check(net: &SimNet, recent: &[Delivery], e: &Expectation) -> Result<(bool, String), SimError> {
    Ok(match e {
        Expectation::Ok => {
            let bad: Vec<String> = recent.iter().filter_map(|d| d.reason().map(str::to_string)).collect();
            (bad.is_empty(), format!("rejections: {bad:?}"))
        }
        Expectation::Reject(r) => {
            let seen: Vec<&str> = recent.iter().filter_map(Delivery::reason).collect();
            (seen.contains(&r.as_str()), format!("rejections: {seen:?}"))
        }
        Expectation::Trust { from, to, level } => {
            let got = net.audit().trust(from, to);
            (got == *level, format!("observed {}", got.as_str()))
        }
        Expectation::MutualAuth { mu, fn_id, at_least } => {
            let n = net.audit().mutual_auth(mu, fn_id);
            (n >= *at_least, format!("{n} sessions"))
        }
        Expectation::Ledger { fn_id, visa_no, valid } => match net.foreign(fn_id)?.ledger().get(visa_no) {
            Some(rec) => (rec.valid == *valid, format!("valid={}", rec.valid)),
            None => (false, "no such visa".to_string()),
        },
        Expectation::Visas { mu, count } => {
            let n = net.mobile(mu)?.visas().len();
            (n == *count, format!("{n} visas"))
        }
        Expectation::KeysAgree { mu, fn_id } => {
            let m = net.mobile(mu)?;
            let f = net.foreign(fn_id)?;
            let held: Vec<u64> = m.visas().keys().filter(|(f, _)| f == fn_id).map(|(_, n)| *n).collect();
            let agree = held
                .iter()
                .all(|n| m.chain_key(fn_id, *n).is_some() && m.chain_key(fn_id, *n) == f.chain_key(*n));
            (!held.is_empty() && agree, format!("{} visas compared", held.len()))
        }
        Expectation::Goals { mu, fn_id, hn } => {
            let goals = net.audit().goal_checklist(mu, fn_id, hn);
            let unmet: Vec<&String> = goals.iter().filter(|(_, ok)| !ok).map(|(g, _)| g).collect();
            (unmet.is_empty(), format!("unmet: {unmet:?}"))
        }
        Expectation::KeyFreshness { min_sessions } => match audit_key_freshness(net.trace(), *min_sessions) {
            Ok(r) => (
                true,
                format!("{} sessions, {} distinct keys", r.sessions, r.distinct_keys),
            ),
            Err(e) => (false, e.to_string()),
        },
        Expectation::NoViolations => (net.violations().is_empty(), format!("{:?}", net.violations())),
        Expectation::Queue(n) => (net.queue().len() == *n, format!("{} queued", net.queue().len())),
        Expectation::MuAsymmetric { mu, count } => {
            let n = net.mobile(mu)?.crypto().counts().asymmetric();
            (n == *count, format!("{n} asymmetric operations"))
        }
    })
}

/// Runs a scenario. `seed` overrides the script's own `seed` line; with
/// neither, the seed is 0.
pub fn run_scenario(
    scenario: &Scenario,
    seed: Option<u64>,
    suite: Arc<dyn CryptoSuite>,
) -> Result<ScenarioRun, ScenarioError> {
    scenario.validate()?;
    let seed = seed.or(scenario.seed).unwrap_or(0);
    let mut net = SimNet::new(seed, suite);
    net.note(format!("seed {seed}"));
    for (line, decl) in &scenario.decls {
        let rt = |source| ScenarioError::Runtime { line: *line, source };
        match decl {
            Decl::Actor { role, name } => match role {
                Role::Ca => net.add_ca(name),
                Role::Home => net.add_home(name),
                Role::Foreign => net.add_foreign(name),
                Role::Mobile => unreachable!("mobiles carry a home"),
                Role::Attacker => net.add_attacker(name),
            }
            .map_err(rt)?,
            Decl::Mobile { name, home } => net.add_mobile(name, home).map_err(rt)?,
            Decl::Provisioned(dir) => net.load_provisioned(dir).map_err(rt)?,
        }
    }

    let mut assertions = Vec::new();
    let mut recent: Vec<Delivery> = Vec::new();
    for (line, step) in &scenario.steps {
        let line = *line;
        let rt = |source| ScenarioError::Runtime { line, source };
        if let Step::Expect(e) = step {
            let (passed, detail) = check(&net, &recent, e).map_err(rt)?;
            let text = describe(e);
            net.record(TraceEntry::Assertion {
                line,
                text: text.clone(),
                passed,
            });
            assertions.push(AssertionResult {
                line,
                text,
                passed,
                detail,
            });
            continue;
        }
        recent.clear();
        match step {
            Step::Register { mu, validity_ms } => {
                net.register(mu, *validity_ms).map_err(rt)?;
            }
            Step::RequestVisa { mu, fn_id, descriptor } => {
                net.request_visa(mu, fn_id, descriptor).map_err(rt)?;
            }
            Step::Service { mu, fn_id, descriptor } => {
                net.request_service(mu, fn_id, descriptor).map_err(rt)?;
            }
            Step::RevokePassport { hn, mu } => {
                net.revoke_passport(hn, mu).map_err(rt)?;
            }
            Step::RevokeVisa { mu, fn_id } => {
                net.revoke_visa(mu, fn_id).map_err(rt)?;
            }
            Step::Policy { fn_id, policy } => net.set_policy(fn_id, policy_of(policy)).map_err(rt)?,
            Step::Deliver => recent.push(net.deliver_next().map_err(rt)?),
            Step::DeliverAll => recent = net.deliver_all().map_err(rt)?,
            Step::Drop => {
                net.drop_next().map_err(rt)?;
            }
            Step::Duplicate => {
                net.duplicate_next().map_err(rt)?;
            }
            Step::Delay => net.delay_next().map_err(rt)?,
            Step::Tamper(byte) => {
                net.tamper_next(*byte).map_err(rt)?;
            }
            Step::Inject { from, to, bytes } => {
                net.inject(from, to, bytes.clone());
            }
            Step::AdvanceClock(ms) => net.advance_clock(*ms),
            Step::Replay { index, to } => recent.push(net.replay(*index, to).map_err(rt)?),
            Step::Expect(_) => unreachable!("handled above"),
        }
    }
    Ok(ScenarioRun { seed, net, assertions })
}

/// Bundled example scripts, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("happy_path", include_str!("scenarios/happy_path.pv")),
    ("replay_attack", include_str!("scenarios/replay_attack.pv")),
    ("revocation", include_str!("scenarios/revocation.pv")),
    ("mitm_redirect", include_str!("scenarios/mitm_redirect.pv")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
