//! On-disk provisioning of a small deployment: one CA, one HN, two FNs and
//! one registered MU.
//!
//! Layout of the output directory:
//!
//! | file | contents |
//! |---|---|
//! | `manifest` | one `role name [home]` line per actor |
//! | `<name>.key` | serialized key pair |
//! | `<name>.cert` | CA-signed certificate (networks only) |
//! | `<hn>.registry` | the HN's Passport registry |
//! | `<mu>.card` | the MU's smart card |

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use super::network::{SimError, SimNet, DEFAULT_PASSPORT_VALIDITY_MS};
use crate::actors::mobile_user::SmartCard;
use crate::actors::Credentials;
use crate::crypto::{CryptoSuite, KeyPair};
use crate::encoding::EncodingError;
use crate::tokens::Certificate;

#[derive(Debug, Error)]
pub enum ProvisionError {
    #[error("{0} already exists; refusing to overwrite")]
    AlreadyExists(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Decode { path: PathBuf, source: EncodingError },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("{0}")]
    Setup(String),
}

pub const MANIFEST: &str = "manifest";

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ProvisionError + '_ {
    move |source| ProvisionError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<Vec<u8>, ProvisionError> {
    fs::read(path).map_err(io_err(path))
}

fn decode<T>(path: &Path, f: impl FnOnce(&[u8]) -> Result<T, EncodingError>) -> Result<T, ProvisionError> {
    let data = read(path)?;
    f(&data).map_err(|source| ProvisionError::Decode {
        path: path.to_path_buf(),
        source,
    })
}

/// Generates the deployment from `seed` and writes it into `dir`, creating
/// the directory if needed. Fails without writing anything if any target
/// file already exists. Returns the written paths.
pub fn provision(dir: &Path, seed: u64, suite: Arc<dyn CryptoSuite>) -> Result<Vec<PathBuf>, ProvisionError> {
    let setup = |e: SimError| ProvisionError::Setup(e.to_string());
    let mut net = SimNet::new(seed, suite);
    net.add_ca("ca").map_err(setup)?;
    net.add_home("hn").map_err(setup)?;
    net.add_foreign("fn1").map_err(setup)?;
    net.add_foreign("fn2").map_err(setup)?;
    net.add_mobile("mu", "hn").map_err(setup)?;
    net.register("mu", DEFAULT_PASSPORT_VALIDITY_MS).map_err(setup)?;

    let ca_keys = net.ca_keys().expect("declared above").clone();
    let hn = net.home("hn").map_err(setup)?;
    let mut files: Vec<(String, Vec<u8>)> = vec![
        (
            MANIFEST.to_string(),
            b"ca ca\nhn hn\nfn fn1\nfn fn2\nmu mu hn\n".to_vec(),
        ),
        ("ca.key".to_string(), ca_keys.to_bytes()),
        ("hn.key".to_string(), hn.credentials().keys.to_bytes()),
        ("hn.cert".to_string(), hn.credentials().cert.encode()),
        ("hn.registry".to_string(), hn.save_registry().into_bytes()),
    ];
    for name in ["fn1", "fn2"] {
        let f = net.foreign(name).map_err(setup)?;
        files.push((format!("{name}.key"), f.credentials().keys.to_bytes()));
        files.push((format!("{name}.cert"), f.credentials().cert.encode()));
    }
    let card = net.mobile("mu").map_err(setup)?.smart_card().expect("registered above");
    files.push(("mu.card".to_string(), card.to_bytes()));

    let paths: Vec<PathBuf> = files.iter().map(|(name, _)| dir.join(name)).collect();
    if let Some(existing) = paths.iter().find(|p| p.exists()) {
        return Err(ProvisionError::AlreadyExists(existing.clone()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for ((_, data), path) in files.iter().zip(&paths) {
        fs::write(path, data).map_err(io_err(path))?;
    }
    Ok(paths)
}

/// Actors read back from a provisioned directory.
#[derive(Debug)]
pub struct Provisioned {
    pub ca_name: String,
    pub ca_keys: KeyPair,
    /// Credentials and registry text of each HN.
    pub homes: Vec<(Credentials, String)>,
    pub foreigns: Vec<Credentials>,
    /// `(name, home, card)` of each MU.
    pub mobiles: Vec<(String, String, SmartCard)>,
}

pub fn load(dir: &Path) -> Result<Provisioned, ProvisionError> {
    let manifest_path = dir.join(MANIFEST);
    let manifest = String::from_utf8_lossy(&read(&manifest_path)?).into_owned();
    let mut ca: Option<(String, KeyPair)> = None;
    let mut homes = Vec::new();
    let mut foreigns = Vec::new();
    let mut mobiles = Vec::new();
    for (i, line) in manifest.lines().enumerate() {
        let line_no = i + 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        let bad = |reason: &str| ProvisionError::Manifest {
            line: line_no,
            reason: reason.to_string(),
        };
        match words.as_slice() {
            [] => {}
            ["ca", name] => {
                let keys = decode(&dir.join(format!("{name}.key")), KeyPair::from_bytes)?;
                ca = Some((name.to_string(), keys));
            }
            [role @ ("hn" | "fn"), name] => {
                let (_, ca_keys) = ca.as_ref().ok_or_else(|| bad("ca must come first"))?;
                let creds = Credentials {
                    id: name.to_string(),
                    keys: decode(&dir.join(format!("{name}.key")), KeyPair::from_bytes)?,
                    cert: decode(&dir.join(format!("{name}.cert")), Certificate::decode)?,
                    ca_public_key: ca_keys.public_key.clone(),
                };
                if *role == "hn" {
                    let path = dir.join(format!("{name}.registry"));
                    let registry = String::from_utf8_lossy(&read(&path)?).into_owned();
                    homes.push((creds, registry));
                } else {
                    foreigns.push(creds);
                }
            }
            ["mu", name, home] => {
                let card = decode(&dir.join(format!("{name}.card")), SmartCard::from_bytes)?;
                mobiles.push((name.to_string(), home.to_string(), card));
            }
            _ => return Err(bad("expected `ca NAME`, `hn NAME`, `fn NAME` or `mu NAME HOME`")),
        }
    }
    let (ca_name, ca_keys) = ca.ok_or(ProvisionError::Manifest {
        line: 0,
        reason: "no ca declared".to_string(),
    })?;
    Ok(Provisioned {
        ca_name,
        ca_keys,
        homes,
        foreigns,
        mobiles,
    })
}
