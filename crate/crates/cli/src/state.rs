use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use cloudidm::canonical;
use cloudidm::idm::{Authority, AuthorityParty, PublicParams};

use crate::error::CliError;

pub const PUBLIC_PARAMS: &str = "pk.json";
pub const REVOCATION_LIST: &str = "arl.json";

/// On-disk layout of one deployment.
#[derive(Debug, Clone)]
pub struct StateDir {
    root: PathBuf,
}

/// Keeps user-chosen identifiers usable as file names.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

pub fn party_file(i: u32) -> String {
    format!("party-{i}.secret.json")
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Writes through a temporary sibling so readers never see half a file.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json_file<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, &canonical::to_canonical_bytes(value))
}

impl StateDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn is_initialized(&self) -> bool {
        self.path(PUBLIC_PARAMS).is_file()
    }

    pub fn read<T: DeserializeOwned>(&self, rel: &str) -> Result<T, CliError> {
        read_json_file(&self.path(rel))
    }

    pub fn write<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        write_json_file(&self.path(rel), value)
    }

    /// Digest over every file's relative path and contents, in path order.
    /// An absent directory digests like an empty one.
    pub fn snapshot_digest(&self) -> Result<[u8; 32], CliError> {
        let mut files = Vec::new();
        if self.root.is_dir() {
            collect_files(&self.root, &self.root, &mut files)?;
        }
        files.sort();
        let mut parts: Vec<Vec<u8>> = Vec::with_capacity(files.len() * 2);
        for rel in files {
            let bytes = fs::read(self.root.join(&rel))?;
            parts.push(rel.into_bytes());
            parts.push(canonical::sha256(&bytes).to_vec());
        }
        let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
        Ok(canonical::sha256_concat(&refs))
    }

    pub fn load_params(&self) -> Result<PublicParams, CliError> {
        if !self.is_initialized() {
            return Err(CliError::usage(format!("{} has no deployment; run setup first", self.root.display())));
        }
        self.read(PUBLIC_PARAMS)
    }

    pub fn load_parties(&self, params: &PublicParams) -> Result<Vec<AuthorityParty>, CliError> {
        let mut parties = Vec::with_capacity(params.parties);
        for i in 1..=params.parties as u32 {
            let party: AuthorityParty = self.read(&party_file(i))?;
            if party.id.0 != i {
                return Err(CliError::usage(format!("{} holds party {}", party_file(i), party.id)));
            }
            parties.push(party);
        }
        Ok(parties)
    }

    pub fn save_authority(&self, authority: &Authority) -> Result<(), CliError> {
        self.write(PUBLIC_PARAMS, &authority.params)?;
        for p in &authority.parties {
            self.write(&party_file(p.id.0), p)?;
        }
        if let Some(m) = authority.party(authority.params.maintainer) {
            self.write(REVOCATION_LIST, &m.arl)?;
        }
        Ok(())
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("walked from root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}
