//! Deterministic NSL-KDD-shaped corpus generator.
//!
//! Produces 42-field lines (41 features + subtype label) with a class mix
//! close to KDDTrain+: about half normal traffic, a large DoS share dominated
//! by `neptune`, then probes, and small R2L/U2R tails. Attack subtypes are
//! drawn from a fixed set of prototypes with light jitter, so attack
//! sessions repeat the way real flood and scan traffic does. A small share of
//! normal sessions imitate attack prototypes, which is where signature
//! conflicts and false positives come from.
//!
//! Two corpora generated with the same `world_seed` share prototypes; the
//! `seed` only drives which records are drawn.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROTOTYPES_PER_SUBTYPE: usize = 6;
/// Share of normal sessions that copy a jittered attack prototype.
const NORMAL_MIMIC_RATE: f64 = 0.002;

const SERVICES: &[&str] = &[
    "http", "smtp", "ftp_data", "ftp", "domain_u", "private", "telnet", "finger", "eco_i",
    "ecr_i", "other", "auth", "pop_3", "imap4", "ntp_u", "urp_i", "tim_i", "ssh", "whois",
    "time", "domain", "gopher", "login", "link", "uucp", "sunrpc", "netbios_ns", "netbios_dgm",
    "netbios_ssn", "mtp", "iso_tsap", "systat", "daytime", "netstat", "nnsp", "courier", "ctf",
    "discard", "echo", "csnet_ns", "efs", "exec", "hostnames", "http_443", "kshell", "klogin",
    "ldap", "name", "nntp", "pop_2", "printer", "remote_job", "rje", "shell", "sql_net",
    "supdup", "uucp_path", "vmnet", "X11", "Z39_50", "bgp", "IRC",
];
const NORMAL_SERVICES: &[&str] = &[
    "http", "http", "http", "smtp", "smtp", "ftp_data", "domain_u", "private", "ftp", "other",
    "urp_i", "ecr_i", "ntp_u", "telnet", "pop_3", "finger", "auth",
];
const FLAGS: &[&str] = &["SF", "S0", "REJ", "RSTR", "RSTO", "SH", "S1", "S2", "RSTOS0", "S3", "OTH"];

/// (subtype, class weight within the corpus, generator family)
const SUBTYPES: &[(&str, f64, Family)] = &[
    ("normal", 0.534, Family::Normal),
    ("neptune", 0.327, Family::Flood),
    ("smurf", 0.021, Family::Icmp),
    ("back", 0.008, Family::Payload),
    ("teardrop", 0.007, Family::Fragment),
    ("pod", 0.0016, Family::Icmp),
    ("land", 0.0002, Family::Fragment),
    ("satan", 0.029, Family::Scan),
    ("ipsweep", 0.029, Family::Sweep),
    ("portsweep", 0.023, Family::Scan),
    ("nmap", 0.012, Family::Sweep),
    ("warezclient", 0.0071, Family::Login),
    ("guess_passwd", 0.0004, Family::Login),
    ("warezmaster", 0.0002, Family::Login),
    ("imap", 0.0001, Family::Login),
    ("ftp_write", 0.0001, Family::Login),
    ("multihop", 0.0001, Family::Login),
    ("phf", 0.0001, Family::Payload),
    ("spy", 0.00005, Family::Login),
    ("buffer_overflow", 0.00024, Family::Root),
    ("rootkit", 0.0001, Family::Root),
    ("loadmodule", 0.0001, Family::Root),
    ("perl", 0.00005, Family::Root),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Normal,
    Flood,
    Icmp,
    Payload,
    Fragment,
    Scan,
    Sweep,
    Login,
    Root,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    /// Seed for the shared attack prototypes.
    pub world_seed: u64,
    /// Seed for the record draw.
    pub seed: u64,
    pub rows: usize,
}

impl SynthConfig {
    pub fn new(seed: u64, rows: usize) -> Self {
        SynthConfig {
            world_seed: 0x05ee_d1d5,
            seed,
            rows,
        }
    }
}

type Row = [f64; 41];

#[derive(Clone)]
struct Prototype {
    protocol: &'static str,
    service: &'static str,
    flag: &'static str,
    values: Row,
}

fn rate(rng: &mut impl Rng) -> f64 {
    (rng.gen_range(0..=100) as f64) / 100.0
}

fn pick<T: Copy>(rng: &mut impl Rng, items: &[T]) -> T {
    *items.choose(rng).expect("non-empty")
}

fn attack_prototype(family: Family, rng: &mut impl Rng) -> Prototype {
    let mut v: Row = [0.0; 41];
    let (protocol, service, flag);
    match family {
        Family::Flood => {
            protocol = "tcp";
            service = pick(rng, SERVICES);
            flag = pick(rng, &["S0", "S0", "S0", "REJ"]);
            v[22] = rng.gen_range(100..=511) as f64;
            v[23] = rng.gen_range(1..=30) as f64;
            let serror = if flag == "S0" { 1.0 } else { 0.0 };
            v[24] = serror;
            v[25] = serror;
            v[26] = 1.0 - serror;
            v[27] = 1.0 - serror;
            v[28] = rng.gen_range(0..=10) as f64 / 100.0;
            v[29] = rng.gen_range(5..=10) as f64 / 100.0;
            v[31] = 255.0;
            v[32] = rng.gen_range(1..=30) as f64;
            v[33] = rng.gen_range(0..=12) as f64 / 100.0;
            v[34] = rng.gen_range(5..=8) as f64 / 100.0;
            v[37] = serror;
            v[38] = serror;
            v[39] = 1.0 - serror;
            v[40] = 1.0 - serror;
        }
        Family::Icmp => {
            protocol = "icmp";
            service = pick(rng, &["ecr_i", "ecr_i", "eco_i", "tim_i"]);
            flag = "SF";
            v[4] = pick(rng, &[520.0, 1032.0, 1480.0]);
            v[7] = if rng.gen_bool(0.2) { 1.0 } else { 0.0 };
            v[22] = pick(rng, &[511.0, 510.0, 1.0, 2.0]);
            v[23] = v[22];
            v[28] = 1.0;
            v[31] = 255.0;
            v[32] = 255.0;
            v[33] = 1.0;
            v[35] = 1.0;
        }
        Family::Payload => {
            protocol = "tcp";
            service = "http";
            flag = pick(rng, &["SF", "RSTR"]);
            v[0] = rng.gen_range(0..=2) as f64;
            v[4] = 54540.0;
            v[5] = pick(rng, &[8314.0, 7300.0, 0.0]);
            v[9] = 2.0;
            v[11] = 1.0;
            v[12] = 1.0;
            v[22] = rng.gen_range(1..=10) as f64;
            v[23] = v[22];
            v[28] = 1.0;
            v[31] = rng.gen_range(10..=255) as f64;
            v[32] = rng.gen_range(10..=255) as f64;
            v[33] = 1.0;
        }
        Family::Fragment => {
            protocol = pick(rng, &["udp", "tcp"]);
            service = if protocol == "udp" { "private" } else { pick(rng, &["finger", "telnet", "private"]) };
            flag = if protocol == "udp" { "SF" } else { "S0" };
            v[4] = if protocol == "udp" { 28.0 } else { 0.0 };
            v[6] = if protocol == "tcp" { 1.0 } else { 0.0 };
            v[7] = if protocol == "udp" { 3.0 } else { 0.0 };
            v[22] = rng.gen_range(1..=40) as f64;
            v[23] = v[22];
            v[28] = 1.0;
            v[31] = rng.gen_range(50..=255) as f64;
            v[32] = rng.gen_range(1..=50) as f64;
        }
        Family::Scan => {
            protocol = pick(rng, &["tcp", "tcp", "udp"]);
            service = pick(rng, SERVICES);
            flag = pick(rng, &["REJ", "RSTO", "RSTOS0", "SF", "SH"]);
            v[22] = rng.gen_range(1..=5) as f64;
            v[23] = 1.0;
            v[26] = if flag == "REJ" { 1.0 } else { 0.0 };
            v[27] = v[26];
            v[29] = rate(rng);
            v[30] = rate(rng);
            v[31] = rng.gen_range(1..=255) as f64;
            v[32] = rng.gen_range(1..=5) as f64;
            v[33] = rng.gen_range(0..=5) as f64 / 100.0;
            v[34] = rng.gen_range(60..=100) as f64 / 100.0;
            v[35] = rate(rng);
            v[39] = v[26];
            v[40] = 1.0 - v[26] * 0.5;
        }
        Family::Sweep => {
            protocol = pick(rng, &["icmp", "icmp", "tcp"]);
            service = if protocol == "icmp" { "eco_i" } else { "private" };
            flag = "SF";
            v[4] = pick(rng, &[8.0, 18.0, 20.0]);
            v[22] = 1.0;
            v[23] = rng.gen_range(1..=20) as f64;
            v[28] = 1.0;
            v[30] = 1.0;
            v[31] = rng.gen_range(1..=100) as f64;
            v[32] = rng.gen_range(1..=60) as f64;
            v[33] = 1.0;
            v[35] = 1.0;
            v[36] = rate(rng);
        }
        Family::Login => {
            protocol = "tcp";
            service = pick(rng, &["ftp", "ftp_data", "telnet", "imap4", "login"]);
            flag = pick(rng, &["SF", "SF", "RSTO"]);
            v[0] = rng.gen_range(0..=300) as f64;
            v[4] = rng.gen_range(100..=400_000) as f64;
            v[5] = rng.gen_range(0..=5_000) as f64;
            v[9] = rng.gen_range(0..=28) as f64;
            v[10] = if service == "telnet" { 1.0 } else { 0.0 };
            v[11] = 1.0;
            v[16] = rng.gen_range(0..=3) as f64;
            v[21] = if service.starts_with("ftp") { 1.0 } else { 0.0 };
            v[22] = rng.gen_range(1..=3) as f64;
            v[23] = v[22];
            v[28] = 1.0;
            v[31] = rng.gen_range(1..=255) as f64;
            v[32] = rng.gen_range(1..=30) as f64;
            v[33] = rate(rng);
        }
        Family::Root => {
            protocol = "tcp";
            service = "telnet";
            flag = "SF";
            v[0] = rng.gen_range(20..=2_000) as f64;
            v[4] = rng.gen_range(500..=3_000) as f64;
            v[5] = rng.gen_range(1_000..=20_000) as f64;
            v[9] = rng.gen_range(1..=5) as f64;
            v[11] = 1.0;
            v[12] = rng.gen_range(0..=2) as f64;
            v[13] = 1.0;
            v[16] = rng.gen_range(0..=4) as f64;
            v[17] = 1.0;
            v[22] = 1.0;
            v[23] = 1.0;
            v[28] = 1.0;
            v[31] = rng.gen_range(1..=50) as f64;
            v[32] = rng.gen_range(1..=50) as f64;
            v[33] = 1.0;
        }
        Family::Normal => unreachable!("normal sessions are not prototyped"),
    }
    Prototype {
        protocol,
        service,
        flag,
        values: v,
    }
}

fn normal_session(rng: &mut impl Rng) -> Prototype {
    let mut v: Row = [0.0; 41];
    let service = pick(rng, NORMAL_SERVICES);
    let protocol = match service {
        "domain_u" | "ntp_u" | "private" if rng.gen_bool(0.8) => "udp",
        "urp_i" | "ecr_i" => "icmp",
        _ => "tcp",
    };
    let flag = if protocol == "tcp" && rng.gen_bool(0.1) {
        pick(rng, FLAGS)
    } else {
        "SF"
    };
    v[0] = if rng.gen_bool(0.9) { 0.0 } else { rng.gen_range(1..=5_000) as f64 };
    v[4] = (10f64.powf(rng.gen_range(1.0..5.5))).round();
    v[5] = if rng.gen_bool(0.3) { 0.0 } else { (10f64.powf(rng.gen_range(1.0..6.0))).round() };
    v[9] = if rng.gen_bool(0.05) { rng.gen_range(1..=5) as f64 } else { 0.0 };
    v[11] = if protocol == "tcp" { 1.0 } else { 0.0 };
    v[22] = rng.gen_range(1..=60) as f64;
    v[23] = rng.gen_range(1..=v[22] as u32) as f64;
    v[28] = 1.0 - (rng.gen_range(0..=20) as f64) / 100.0;
    v[29] = rng.gen_range(0..=10) as f64 / 100.0;
    v[30] = rng.gen_range(0..=30) as f64 / 100.0;
    v[31] = rng.gen_range(1..=255) as f64;
    v[32] = rng.gen_range(1..=255) as f64;
    v[33] = rate(rng);
    v[34] = rng.gen_range(0..=10) as f64 / 100.0;
    v[35] = rate(rng);
    v[36] = rng.gen_range(0..=10) as f64 / 100.0;
    Prototype {
        protocol,
        service,
        flag,
        values: v,
    }
}

/// Light per-record variation so attack sessions mostly, but not always,
/// repeat their prototype exactly.
fn jitter(p: &mut Prototype, rng: &mut impl Rng, always: bool) {
    if always || rng.gen_bool(0.25) {
        let field = pick(rng, &[22usize, 23, 31, 32]);
        let delta = pick(rng, &[-2.0, -1.0, 1.0, 2.0]);
        let cap = if field >= 31 { 255.0 } else { 511.0 };
        p.values[field] = (p.values[field] + delta).clamp(0.0, cap);
    }
}

fn format_value(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x:.2}")
    }
}

fn render(p: &Prototype, label: &str) -> String {
    let mut line = String::with_capacity(200);
    for (i, x) in p.values.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        match i {
            1 => line.push_str(p.protocol),
            2 => line.push_str(p.service),
            3 => line.push_str(p.flag),
            _ => line.push_str(&format_value(*x)),
        }
    }
    write!(line, ",{label}").unwrap();
    line
}

/// Iterator over generated dataset lines (no trailing newline).
pub struct SynthCorpus {
    rng: ChaCha8Rng,
    prototypes: Vec<Vec<Prototype>>,
    attack_indices: Vec<usize>,
    cumulative: Vec<f64>,
    remaining: usize,
}

impl SynthCorpus {
    pub fn new(config: SynthConfig) -> Self {
        let mut world = ChaCha8Rng::seed_from_u64(config.world_seed);
        let prototypes = SUBTYPES
            .iter()
            .map(|&(_, _, family)| match family {
                Family::Normal => Vec::new(),
                f => (0..PROTOTYPES_PER_SUBTYPE)
                    .map(|_| attack_prototype(f, &mut world))
                    .collect(),
            })
            .collect();
        let total: f64 = SUBTYPES.iter().map(|s| s.1).sum();
        let mut acc = 0.0;
        let cumulative = SUBTYPES
            .iter()
            .map(|s| {
                acc += s.1 / total;
                acc
            })
            .collect();
        SynthCorpus {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            prototypes,
            attack_indices: (1..SUBTYPES.len()).collect(),
            cumulative,
            remaining: config.rows,
        }
    }

    fn draw_prototype(&mut self, subtype: usize, always_jitter: bool) -> Prototype {
        let mut p = self.prototypes[subtype]
            .choose(&mut self.rng)
            .expect("prototypes")
            .clone();
        jitter(&mut p, &mut self.rng, always_jitter);
        p
    }
}

impl Iterator for SynthCorpus {
    type Item = String;

    fn next(&mut self) -> Option<String> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let u: f64 = self.rng.gen();
        let subtype = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(SUBTYPES.len() - 1);
        let (label, _, family) = SUBTYPES[subtype];
        let proto = if family == Family::Normal {
            if self.rng.gen_bool(NORMAL_MIMIC_RATE) {
                let mimic = *self.attack_indices.choose(&mut self.rng).expect("attacks");
                self.draw_prototype(mimic, true)
            } else {
                normal_session(&mut self.rng)
            }
        } else {
            self.draw_prototype(subtype, false)
        };
        Some(render(&proto, label))
    }
}

pub fn generate_lines(config: SynthConfig) -> SynthCorpus {
    SynthCorpus::new(config)
}

pub fn write_corpus(path: impl AsRef<Path>, config: SynthConfig) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for line in generate_lines(config) {
        writeln!(out, "{line}")?;
    }
    out.flush()
}
