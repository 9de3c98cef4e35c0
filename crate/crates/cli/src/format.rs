//! Network text files.
//!
//! ```text
//! phaseflow-network 1
//! [metadata]
//! description = two-bus example
//! base_kva = 100
//! base_kv = 0.4
//! [root]
//! node = 0
//! voltage = 1.05∠0 1.05∠120 1.05∠-120
//! [segments]
//! # from to zaa zab zac zba zbb zbc zca zcb zcc
//! 0 1 0.01+j0.004 0+j0 0+j0 0+j0 0.01+j0.004 0+j0 0+j0 0+j0 0.01+j0.004
//! [customers]
//! # id node p q z_service flexible phase
//! 1 1 0.02 0.005 0.002+j0.0004 no a
//! ```
//!
//! Blank lines and `#` comments are ignored. Quantities are per-unit; the
//! metadata base values are informational. Root angles are degrees.
//! `@` is accepted in place of `∠`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use phaseflow::model::{angle_deg, polar_deg};
use phaseflow::{Customer, CustomerId, LineSegment, Network, NodeId, Phase, PhaseMatrix, Phasor};

use crate::CliError;

pub const VERSION_TAG: &str = "phaseflow-network 1";

/// A parsed network together with its free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkFile {
    pub metadata: BTreeMap<String, String>,
    pub network: Network,
}

impl NetworkFile {
    pub fn new(network: Network) -> Self {
        NetworkFile {
            metadata: BTreeMap::new(),
            network,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Metadata,
    Root,
    Segments,
    Customers,
}

fn err(line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        line,
        message: message.into(),
    }
}

fn number(tok: &str, line: usize, what: &str) -> Result<f64, CliError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| err(line, format!("{what}: cannot read '{tok}' as a number")))?;
    if !v.is_finite() {
        return Err(err(line, format!("{what}: '{tok}' is not finite")));
    }
    Ok(v)
}

fn integer(tok: &str, line: usize, what: &str) -> Result<u32, CliError> {
    tok.parse()
        .map_err(|_| err(line, format!("{what}: cannot read '{tok}' as an id")))
}

/// `re+jim` or `re-jim`.
pub fn parse_complex(tok: &str) -> Option<Phasor> {
    let split = tok
        .char_indices()
        .skip(1)
        .find(|&(i, c)| (c == '+' || c == '-') && tok[i + 1..].starts_with('j'))?;
    let (re, rest) = tok.split_at(split.0);
    let re: f64 = re.parse().ok()?;
    let im: f64 = rest[2..].parse().ok()?;
    if rest[2..].starts_with(['+', '-']) {
        return None;
    }
    let im = if rest.starts_with('-') { -im } else { im };
    Some(Phasor::new(re, im))
}

fn complex(tok: &str, line: usize, what: &str) -> Result<Phasor, CliError> {
    let z = parse_complex(tok)
        .ok_or_else(|| err(line, format!("{what}: expected re+jim, got '{tok}'")))?;
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(err(line, format!("{what}: '{tok}' is not finite")));
    }
    Ok(z)
}

fn polar(tok: &str, line: usize) -> Result<Phasor, CliError> {
    let (m, d) = tok
        .split_once('∠')
        .or_else(|| tok.split_once('@'))
        .ok_or_else(|| err(line, format!("root voltage: expected mag∠deg, got '{tok}'")))?;
    Ok(polar_deg(
        number(m, line, "root magnitude")?,
        number(d, line, "root angle")?,
    ))
}

fn phase(tok: &str, line: usize) -> Result<Phase, CliError> {
    tok.parse()
        .map_err(|_| err(line, format!("phase: expected a, b or c, got '{tok}'")))
}

fn flag(tok: &str, line: usize) -> Result<bool, CliError> {
    match tok {
        "yes" | "true" | "1" => Ok(true),
        "no" | "false" | "0" => Ok(false),
        _ => Err(err(
            line,
            format!("flexible: expected yes or no, got '{tok}'"),
        )),
    }
}

/// Parses the text form. Structural problems are reported with 1-based line
/// numbers; electrical validity is left to [`phaseflow::model::validate_network`].
pub fn parse_network(text: &str) -> Result<NetworkFile, CliError> {
    let mut section = Section::None;
    let mut saw_version = false;
    let mut metadata = BTreeMap::new();
    let mut root_node: Option<NodeId> = None;
    let mut root_v: Option<[Phasor; 3]> = None;
    let mut segments = Vec::new();
    let mut customers = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if !saw_version {
            if body != VERSION_TAG {
                return Err(err(line, format!("expected '{VERSION_TAG}' header")));
            }
            saw_version = true;
            continue;
        }
        if body.starts_with('[') {
            section = match body {
                "[metadata]" => Section::Metadata,
                "[root]" => Section::Root,
                "[segments]" => Section::Segments,
                "[customers]" => Section::Customers,
                other => return Err(err(line, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(err(line, "data before the first section")),
            Section::Metadata | Section::Root => {
                let (k, v) = body
                    .split_once('=')
                    .ok_or_else(|| err(line, "expected key = value"))?;
                let (k, v) = (k.trim(), v.trim());
                if section == Section::Metadata {
                    metadata.insert(k.to_string(), v.to_string());
                    continue;
                }
                match k {
                    "node" => root_node = Some(NodeId(integer(v, line, "root node")?)),
                    "voltage" => {
                        let toks: Vec<&str> = v.split_whitespace().collect();
                        if toks.len() != 3 {
                            return Err(err(line, "root voltage needs three phasors"));
                        }
                        root_v = Some([
                            polar(toks[0], line)?,
                            polar(toks[1], line)?,
                            polar(toks[2], line)?,
                        ]);
                    }
                    other => return Err(err(line, format!("unknown root key '{other}'"))),
                }
            }
            Section::Segments => {
                let toks: Vec<&str> = body.split_whitespace().collect();
                if toks.len() != 11 {
                    return Err(err(
                        line,
                        format!(
                            "segment row needs 11 fields (from, to, 9 impedances), got {}",
                            toks.len()
                        ),
                    ));
                }
                let from = NodeId(integer(toks[0], line, "segment from")?);
                let to = NodeId(integer(toks[1], line, "segment to")?);
                let mut z: PhaseMatrix = [[Phasor::new(0.0, 0.0); 3]; 3];
                for (k, tok) in toks[2..].iter().enumerate() {
                    let name = format!(
                        "segment {from}->{to} impedance z{}{}",
                        Phase::from_index(k / 3).letter(),
                        Phase::from_index(k % 3).letter()
                    );
                    z[k / 3][k % 3] = complex(tok, line, &name)?;
                }
                segments.push(LineSegment::new(from, to, z));
            }
            Section::Customers => {
                let toks: Vec<&str> = body.split_whitespace().collect();
                if toks.len() != 7 {
                    return Err(err(
                        line,
                        format!("customer row needs 7 fields, got {}", toks.len()),
                    ));
                }
                customers.push(Customer {
                    id: CustomerId(integer(toks[0], line, "customer id")?),
                    node: NodeId(integer(toks[1], line, "customer node")?),
                    p: number(toks[2], line, "p")?,
                    q: number(toks[3], line, "q")?,
                    z_service: complex(toks[4], line, "z_service")?,
                    flexible: flag(toks[5], line)?,
                    initial_phase: phase(toks[6], line)?,
                });
            }
        }
    }
    if !saw_version {
        return Err(err(1, format!("empty file, expected '{VERSION_TAG}'")));
    }
    let end = text.lines().count().max(1);
    let root = root_node.ok_or_else(|| err(end, "missing root node"))?;
    let root_v = root_v.ok_or_else(|| err(end, "missing root voltage"))?;
    Ok(NetworkFile {
        metadata,
        network: Network::new(root, root_v, segments, customers),
    })
}

fn fmt_complex(z: Phasor) -> String {
    if z.im.is_sign_negative() {
        format!("{}-j{}", z.re, -z.im)
    } else {
        format!("{}+j{}", z.re, z.im)
    }
}

/// Rounds to 12 decimals so phasors built from short decimal polar values
/// come back bit-identical.
fn tidy(v: f64) -> f64 {
    let r = (v * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn emit_network(file: &NetworkFile) -> String {
    let net = &file.network;
    let mut out = String::new();
    writeln!(out, "{VERSION_TAG}").unwrap();
    writeln!(out, "[metadata]").unwrap();
    for (k, v) in &file.metadata {
        writeln!(out, "{k} = {v}").unwrap();
    }
    writeln!(out, "[root]").unwrap();
    writeln!(out, "node = {}", net.root()).unwrap();
    let rv: Vec<String> = net
        .root_voltage()
        .iter()
        .map(|v| format!("{}∠{}", tidy(v.norm()), tidy(angle_deg(*v))))
        .collect();
    writeln!(out, "voltage = {}", rv.join(" ")).unwrap();
    writeln!(out, "[segments]").unwrap();
    writeln!(out, "# from to zaa zab zac zba zbb zbc zca zcb zcc").unwrap();
    for s in net.segments() {
        let zs: Vec<String> = s.z.iter().flatten().map(|z| fmt_complex(*z)).collect();
        writeln!(out, "{} {} {}", s.from, s.to, zs.join(" ")).unwrap();
    }
    writeln!(out, "[customers]").unwrap();
    writeln!(out, "# id node p q z_service flexible phase").unwrap();
    for c in net.customers() {
        writeln!(
            out,
            "{} {} {} {} {} {} {}",
            c.id,
            c.node,
            c.p,
            c.q,
            fmt_complex(c.z_service),
            if c.flexible { "yes" } else { "no" },
            c.initial_phase
        )
        .unwrap();
    }
    out
}
