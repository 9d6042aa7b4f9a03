//! Line-oriented cluster manifest.
//!
//! ```text
//! volume <name>
//!   size_mb <uint>
//! end
//! deployment <name>
//!   replicas <uint>
//!   exec <rest-of-line command>
//!   env <KEY>=<value>            # repeatable
//!   cpu_target <1..100>          # optional; enables autoscaling
//!   min_replicas <uint>          # optional, default 1
//!   max_replicas <uint>          # optional, default 10
//!   volume <claim-name>          # optional
//! end
//! service <name>
//!   listen <port>
//!   target <deployment-name>
//! end
//! ```
//!
//! `#` starts a comment when it opens a line or follows whitespace.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

pub const DEFAULT_MIN_REPLICAS: u32 = 1;
pub const DEFAULT_MAX_REPLICAS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeClaim {
    pub name: String,
    pub size_mb: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentSpec {
    pub name: String,
    pub replicas: u32,
    pub exec: String,
    pub env: Vec<(String, String)>,
    pub cpu_target_percent: Option<u8>,
    pub min_replicas: u32,
    pub max_replicas: u32,
    pub volume: Option<String>,
}

impl DeploymentSpec {
    pub fn autoscaled(&self) -> bool {
        self.cpu_target_percent.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub name: String,
    pub listen_port: u16,
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub volumes: Vec<VolumeClaim>,
    pub deployments: Vec<DeploymentSpec>,
    pub services: Vec<ServiceSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ManifestError {
    pub kind: ErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ErrorKind::Syntax => "syntax error",
            ErrorKind::Semantic => "semantic error",
        };
        write!(
            f,
            "{kind} at line {}, column {}: {}",
            self.line, self.column, self.message
        )
    }
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ManifestError {
    ManifestError {
        kind: ErrorKind::Syntax,
        line,
        column,
        message: message.into(),
    }
}

fn semantic(line: usize, column: usize, message: impl Into<String>) -> ManifestError {
    ManifestError {
        kind: ErrorKind::Semantic,
        line,
        column,
        message: message.into(),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphanumeric())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn is_env_key(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Environment variable under which a claim's provisioned path is exposed.
pub fn volume_env_key(claim: &str) -> String {
    format!("VOLUME_{}", claim.to_ascii_uppercase().replace('-', "_"))
}

/// Strips a trailing comment.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

/// One significant line, split into keyword and argument with 1-based columns.
struct Line<'a> {
    number: usize,
    keyword: &'a str,
    keyword_col: usize,
    arg: &'a str,
    arg_col: usize,
}

fn tokenize(number: usize, raw: &str) -> Option<Line<'_>> {
    let content = strip_comment(raw).trim_end();
    let start = content.len() - content.trim_start().len();
    let content = &content[start..];
    if content.is_empty() {
        return None;
    }
    let kw_end = content.find(char::is_whitespace).unwrap_or(content.len());
    let keyword = &content[..kw_end];
    let rest = &content[kw_end..];
    let arg_off = rest.len() - rest.trim_start().len();
    Some(Line {
        number,
        keyword,
        keyword_col: start + 1,
        arg: rest.trim_start(),
        arg_col: start + kw_end + arg_off + 1,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Volume,
    Deployment,
    Service,
}

struct Block<'a> {
    kind: BlockKind,
    header: Line<'a>,
    name: &'a str,
    entries: Vec<Line<'a>>,
}

fn parse_uint<T: std::str::FromStr>(line: &Line<'_>) -> Result<T, ManifestError> {
    if line.arg.is_empty() || !line.arg.bytes().all(|b| b.is_ascii_digit()) {
        return Err(syntax(
            line.number,
            line.arg_col,
            format!("`{}` expects an unsigned integer, got {:?}", line.keyword, line.arg),
        ));
    }
    line.arg.parse().map_err(|_| {
        syntax(
            line.number,
            line.arg_col,
            format!("`{}` value {} is out of range", line.keyword, line.arg),
        )
    })
}

fn single_word<'a>(line: &Line<'a>) -> Result<&'a str, ManifestError> {
    if line.arg.is_empty() {
        return Err(syntax(
            line.number,
            line.arg_col,
            format!("`{}` expects a value", line.keyword),
        ));
    }
    if line.arg.contains(char::is_whitespace) {
        return Err(syntax(
            line.number,
            line.arg_col,
            format!("`{}` expects a single word, got {:?}", line.keyword, line.arg),
        ));
    }
    Ok(line.arg)
}

fn identifier<'a>(line: &Line<'a>) -> Result<&'a str, ManifestError> {
    let word = single_word(line)?;
    if !is_identifier(word) {
        return Err(syntax(
            line.number,
            line.arg_col,
            format!("{word:?} is not a valid name"),
        ));
    }
    Ok(word)
}

/// Tracks which non-repeatable keys a block has already set.
struct Seen(HashSet<&'static str>);

impl Seen {
    fn once(&mut self, key: &'static str, line: &Line<'_>) -> Result<(), ManifestError> {
        if !self.0.insert(key) {
            return Err(syntax(
                line.number,
                line.keyword_col,
                format!("`{key}` given more than once"),
            ));
        }
        Ok(())
    }
}

fn require(seen: &Seen, key: &str, block: &Block<'_>) -> Result<(), ManifestError> {
    if !seen.0.contains(key) {
        return Err(syntax(
            block.header.number,
            block.header.keyword_col,
            format!("{} {:?} is missing required `{key}`", block.header.keyword, block.name),
        ));
    }
    Ok(())
}

fn unknown_key(kind: &str, line: &Line<'_>) -> ManifestError {
    syntax(
        line.number,
        line.keyword_col,
        format!("unknown key `{}` in {kind} block", line.keyword),
    )
}

fn build_volume(block: &Block<'_>) -> Result<VolumeClaim, ManifestError> {
    let mut seen = Seen(HashSet::new());
    let mut size_mb = 0;
    for line in &block.entries {
        match line.keyword {
            "size_mb" => {
                seen.once("size_mb", line)?;
                size_mb = parse_uint(line)?;
                if size_mb == 0 {
                    return Err(semantic(line.number, line.arg_col, "size_mb must be positive"));
                }
            }
            _ => return Err(unknown_key("volume", line)),
        }
    }
    require(&seen, "size_mb", block)?;
    Ok(VolumeClaim {
        name: block.name.to_string(),
        size_mb,
    })
}

fn build_deployment(block: &Block<'_>) -> Result<DeploymentSpec, ManifestError> {
    let mut seen = Seen(HashSet::new());
    let mut spec = DeploymentSpec {
        name: block.name.to_string(),
        replicas: 0,
        exec: String::new(),
        env: Vec::new(),
        cpu_target_percent: None,
        min_replicas: DEFAULT_MIN_REPLICAS,
        max_replicas: DEFAULT_MAX_REPLICAS,
        volume: None,
    };
    let mut replicas_line = 0;
    for line in &block.entries {
        match line.keyword {
            "replicas" => {
                seen.once("replicas", line)?;
                spec.replicas = parse_uint(line)?;
                replicas_line = line.number;
                if spec.replicas == 0 {
                    return Err(semantic(line.number, line.arg_col, "replicas must be at least 1"));
                }
            }
            "exec" => {
                seen.once("exec", line)?;
                if line.arg.is_empty() {
                    return Err(syntax(line.number, line.arg_col, "`exec` expects a command"));
                }
                spec.exec = line.arg.to_string();
            }
            "env" => {
                let word = single_word(line)?;
                let Some((key, value)) = word.split_once('=') else {
                    return Err(syntax(line.number, line.arg_col, "`env` expects KEY=value"));
                };
                if !is_env_key(key) {
                    return Err(syntax(
                        line.number,
                        line.arg_col,
                        format!("{key:?} is not a valid environment variable name"),
                    ));
                }
                spec.env.push((key.to_string(), value.to_string()));
            }
            "cpu_target" => {
                seen.once("cpu_target", line)?;
                let v: u8 = parse_uint(line)?;
                if !(1..=100).contains(&v) {
                    return Err(semantic(line.number, line.arg_col, "cpu_target must be within 1..100"));
                }
                spec.cpu_target_percent = Some(v);
            }
            "min_replicas" => {
                seen.once("min_replicas", line)?;
                spec.min_replicas = parse_uint(line)?;
                if spec.min_replicas == 0 {
                    return Err(semantic(line.number, line.arg_col, "min_replicas must be at least 1"));
                }
            }
            "max_replicas" => {
                seen.once("max_replicas", line)?;
                spec.max_replicas = parse_uint(line)?;
                if spec.max_replicas == 0 {
                    return Err(semantic(line.number, line.arg_col, "max_replicas must be at least 1"));
                }
            }
            "volume" => {
                seen.once("volume", line)?;
                spec.volume = Some(identifier(line)?.to_string());
            }
            _ => return Err(unknown_key("deployment", line)),
        }
    }
    require(&seen, "replicas", block)?;
    require(&seen, "exec", block)?;
    if spec.min_replicas > spec.max_replicas {
        return Err(semantic(
            block.header.number,
            block.header.keyword_col,
            format!(
                "deployment {:?}: min_replicas {} exceeds max_replicas {}",
                spec.name, spec.min_replicas, spec.max_replicas
            ),
        ));
    }
    if spec.autoscaled() && !(spec.min_replicas..=spec.max_replicas).contains(&spec.replicas) {
        return Err(semantic(
            replicas_line,
            1,
            format!(
                "deployment {:?}: replicas {} outside autoscaling bounds {}..{}",
                spec.name, spec.replicas, spec.min_replicas, spec.max_replicas
            ),
        ));
    }
    Ok(spec)
}

fn build_service(block: &Block<'_>) -> Result<(ServiceSpec, usize, usize), ManifestError> {
    let mut seen = Seen(HashSet::new());
    let mut listen_port = 0;
    let mut target = String::new();
    let mut listen_line = 0;
    let mut target_line = 0;
    for line in &block.entries {
        match line.keyword {
            "listen" => {
                seen.once("listen", line)?;
                listen_port = parse_uint(line)?;
                listen_line = line.number;
                if listen_port == 0 {
                    return Err(semantic(line.number, line.arg_col, "listen port must be non-zero"));
                }
            }
            "target" => {
                seen.once("target", line)?;
                target = identifier(line)?.to_string();
                target_line = line.number;
            }
            _ => return Err(unknown_key("service", line)),
        }
    }
    require(&seen, "listen", block)?;
    require(&seen, "target", block)?;
    Ok((
        ServiceSpec {
            name: block.name.to_string(),
            listen_port,
            target,
        },
        listen_line,
        target_line,
    ))
}

impl Manifest {
    /// Parses manifest text, rejecting unknown keys and dangling references.
    pub fn parse(text: &str) -> Result<Manifest, ManifestError> {
        let mut blocks: Vec<Block<'_>> = Vec::new();
        let mut open: Option<Block<'_>> = None;
        let mut last_line = 0;

        for (i, raw) in text.lines().enumerate() {
            last_line = i + 1;
            let Some(line) = tokenize(i + 1, raw) else { continue };
            match open.as_mut() {
                None => {
                    let kind = match line.keyword {
                        "volume" => BlockKind::Volume,
                        "deployment" => BlockKind::Deployment,
                        "service" => BlockKind::Service,
                        "end" => {
                            return Err(syntax(line.number, line.keyword_col, "`end` without an open block"))
                        }
                        other => {
                            return Err(syntax(
                                line.number,
                                line.keyword_col,
                                format!("expected `volume`, `deployment` or `service`, found `{other}`"),
                            ))
                        }
                    };
                    let name = identifier(&line)?;
                    open = Some(Block {
                        kind,
                        name,
                        header: line,
                        entries: Vec::new(),
                    });
                }
                Some(block) => {
                    if line.keyword == "end" {
                        if !line.arg.is_empty() {
                            return Err(syntax(line.number, line.arg_col, "`end` takes no argument"));
                        }
                        blocks.push(open.take().expect("block is open"));
                    } else {
                        block.entries.push(line);
                    }
                }
            }
        }
        if let Some(block) = open {
            return Err(syntax(
                last_line.max(block.header.number),
                1,
                format!(
                    "{} {:?} opened at line {} is never closed with `end`",
                    block.header.keyword, block.name, block.header.number
                ),
            ));
        }

        let mut manifest = Manifest::default();
        let mut names: HashMap<(u8, String), usize> = HashMap::new();
        let mut service_refs = Vec::new();
        let mut volume_refs = Vec::new();
        for block in &blocks {
            let key = (block.kind as u8, block.name.to_string());
            if let Some(first) = names.insert(key, block.header.number) {
                return Err(semantic(
                    block.header.number,
                    block.header.arg_col,
                    format!(
                        "duplicate {} name {:?} (first defined at line {first})",
                        block.header.keyword, block.name
                    ),
                ));
            }
            match block.kind {
                BlockKind::Volume => manifest.volumes.push(build_volume(block)?),
                BlockKind::Deployment => {
                    let spec = build_deployment(block)?;
                    if spec.volume.is_some() {
                        let line = block.entries.iter().find(|l| l.keyword == "volume").unwrap();
                        volume_refs.push((line.number, line.arg_col, spec.volume.clone().unwrap()));
                    }
                    manifest.deployments.push(spec);
                }
                BlockKind::Service => {
                    let (spec, listen_line, target_line) = build_service(block)?;
                    service_refs.push((listen_line, target_line));
                    manifest.services.push(spec);
                }
            }
        }

        for (line, col, claim) in volume_refs {
            if !manifest.volumes.iter().any(|v| v.name == claim) {
                return Err(semantic(line, col, format!("volume claim {claim:?} is not defined")));
            }
        }
        let mut ports = HashMap::new();
        for (svc, (listen_line, target_line)) in manifest.services.iter().zip(service_refs) {
            if !manifest.deployments.iter().any(|d| d.name == svc.target) {
                return Err(semantic(
                    target_line,
                    1,
                    format!("service {:?} targets undefined deployment {:?}", svc.name, svc.target),
                ));
            }
            if let Some(other) = ports.insert(svc.listen_port, svc.name.clone()) {
                return Err(semantic(
                    listen_line,
                    1,
                    format!(
                        "service {:?} reuses listen port {} of service {other:?}",
                        svc.name, svc.listen_port
                    ),
                ));
            }
        }
        Ok(manifest)
    }

    /// Renders the manifest in its canonical text form. Parsing the output
    /// yields an identical structure.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.volumes {
            let _ = writeln!(out, "volume {}\n  size_mb {}\nend", v.name, v.size_mb);
        }
        for d in &self.deployments {
            let _ = writeln!(out, "deployment {}", d.name);
            let _ = writeln!(out, "  replicas {}", d.replicas);
            let _ = writeln!(out, "  exec {}", d.exec);
            for (k, v) in &d.env {
                let _ = writeln!(out, "  env {k}={v}");
            }
            if let Some(t) = d.cpu_target_percent {
                let _ = writeln!(out, "  cpu_target {t}");
            }
            let _ = writeln!(out, "  min_replicas {}", d.min_replicas);
            let _ = writeln!(out, "  max_replicas {}", d.max_replicas);
            if let Some(v) = &d.volume {
                let _ = writeln!(out, "  volume {v}");
            }
            let _ = writeln!(out, "end");
        }
        for s in &self.services {
            let _ = writeln!(out, "service {}\n  listen {}\n  target {}\nend", s.name, s.listen_port, s.target);
        }
        out
    }

    pub fn deployment(&self, name: &str) -> Option<&DeploymentSpec> {
        self.deployments.iter().find(|d| d.name == name)
    }

    pub fn service(&self, name: &str) -> Option<&ServiceSpec> {
        self.services.iter().find(|s| s.name == name)
    }
}

impl std::str::FromStr for Manifest {
    type Err = ManifestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Manifest::parse(s)
    }
}
