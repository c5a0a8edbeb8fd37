//! Tab-separated file formats.
//!
//! * quadruples: `subject<TAB>relation<TAB>object<TAB>time`
//! * intervals: `subject<TAB>relation<TAB>object<TAB>t_start<TAB>t_end`
//! * alignments: `source<TAB>target[<TAB>confidence]`
//!
//! Blank lines and lines starting with `#` are skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::align::{AlignmentPair, AlignmentSet, Provenance};
use crate::error::{Result, TkgError};
use crate::graph::{Quadruple, TemporalKG, TimeStep};
use crate::interval::IntervalEvent;
use crate::vocab::Vocab;

/// How entity and relation fields are mapped to ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymbolMode {
    /// Fields are names interned into the vocabulary.
    #[default]
    Opaque,
    /// Fields are decimal ids; the vocabulary grows to cover them.
    Numeric,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Unknown symbols are errors instead of vocabulary extensions.
    pub strict: bool,
    pub dedup: bool,
    /// Defaults to `max time + 1`.
    pub horizon: Option<TimeStep>,
    pub symbols: SymbolMode,
}

struct Resolver<'a> {
    vocab: &'a mut Vocab,
    kind: &'static str,
    strict: bool,
    mode: SymbolMode,
}

impl Resolver<'_> {
    fn resolve(&mut self, token: &str) -> std::result::Result<usize, String> {
        match self.mode {
            SymbolMode::Opaque => match self.vocab.get(token) {
                Some(id) => Ok(id),
                None if self.strict => Err(format!("unknown {} `{token}`", self.kind)),
                None => Ok(self.vocab.intern(token)),
            },
            SymbolMode::Numeric => {
                let id: usize = token
                    .parse()
                    .map_err(|_| format!("bad {} id `{token}`", self.kind))?;
                if id >= self.vocab.len() {
                    if self.strict {
                        return Err(format!("unknown {} `{token}`", self.kind));
                    }
                    for k in self.vocab.len()..=id {
                        self.vocab.intern(k.to_string());
                    }
                }
                Ok(id)
            }
        }
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_time(tok: &str) -> std::result::Result<TimeStep, String> {
    tok.trim()
        .parse()
        .map_err(|_| format!("bad time `{tok}`"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| TkgError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses quadruple text; `origin` only labels errors.
pub fn parse_quadruples(
    text: &str,
    origin: &Path,
    mut entities: Vocab,
    mut relations: Vocab,
    opts: &LoadOptions,
) -> Result<TemporalKG> {
    let mut quads = Vec::new();
    {
        let mut ent = Resolver {
            vocab: &mut entities,
            kind: "entity",
            strict: opts.strict,
            mode: opts.symbols,
        };
        let mut rel = Resolver {
            vocab: &mut relations,
            kind: "relation",
            strict: opts.strict,
            mode: opts.symbols,
        };
        for (line, raw) in data_lines(text) {
            let err = |msg: String| TkgError::Parse {
                path: origin.to_path_buf(),
                line,
                msg,
            };
            let f: Vec<&str> = raw.split('\t').collect();
            if f.len() != 4 {
                return Err(err(format!("expected 4 tab-separated fields, got {}", f.len())));
            }
            let s = ent.resolve(f[0]).map_err(err)?;
            let r = rel.resolve(f[1]).map_err(err)?;
            let o = ent.resolve(f[2]).map_err(err)?;
            let t = parse_time(f[3]).map_err(err)?;
            quads.push(Quadruple::new(s, r, o, t));
        }
    }
    let horizon = opts
        .horizon
        .unwrap_or_else(|| quads.iter().map(|q| q.time + 1).max().unwrap_or(0));
    let kg = TemporalKG::new(entities, relations, quads, horizon)?;
    Ok(if opts.dedup { kg.dedup() } else { kg })
}

pub fn load_quadruples(
    path: impl AsRef<Path>,
    entities: Vocab,
    relations: Vocab,
    opts: &LoadOptions,
) -> Result<TemporalKG> {
    let path = path.as_ref();
    parse_quadruples(&read(path)?, path, entities, relations, opts)
}

pub fn write_quadruples<W: Write>(kg: &TemporalKG, mut out: W) -> std::io::Result<()> {
    for q in kg.quadruples() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            kg.entities().name(q.subject),
            kg.relations().name(q.relation),
            kg.entities().name(q.object),
            q.time
        )?;
    }
    Ok(())
}

pub fn dump_quadruples(kg: &TemporalKG) -> String {
    let mut buf = Vec::new();
    write_quadruples(kg, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("vocabulary names are utf-8")
}

pub fn save_quadruples(kg: &TemporalKG, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), dump_quadruples(kg).as_bytes())
}

pub fn parse_intervals(
    text: &str,
    origin: &Path,
    entities: &mut Vocab,
    relations: &mut Vocab,
    strict: bool,
) -> Result<Vec<IntervalEvent>> {
    let mut out = Vec::new();
    for (line, raw) in data_lines(text) {
        let err = |msg: String| TkgError::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 tab-separated fields, got {}", f.len())));
        }
        let mut ent = Resolver {
            vocab: entities,
            kind: "entity",
            strict,
            mode: SymbolMode::Opaque,
        };
        let s = ent.resolve(f[0]).map_err(err)?;
        let o = ent.resolve(f[2]).map_err(err)?;
        let mut rel = Resolver {
            vocab: relations,
            kind: "relation",
            strict,
            mode: SymbolMode::Opaque,
        };
        let r = rel.resolve(f[1]).map_err(err)?;
        let start = parse_time(f[3]).map_err(err)?;
        let end = parse_time(f[4]).map_err(err)?;
        out.push(IntervalEvent {
            subject: s,
            relation: r,
            object: o,
            start,
            end,
        });
    }
    Ok(out)
}

pub fn load_intervals(
    path: impl AsRef<Path>,
    entities: &mut Vocab,
    relations: &mut Vocab,
    strict: bool,
) -> Result<Vec<IntervalEvent>> {
    let path = path.as_ref();
    parse_intervals(&read(path)?, path, entities, relations, strict)
}

/// Alignment pairs; a pair with an explicit confidence other than 1 is
/// marked pseudo.
pub fn parse_alignments(
    text: &str,
    origin: &Path,
    source: &Vocab,
    target: &Vocab,
) -> Result<AlignmentSet> {
    let mut out = AlignmentSet::default();
    for (line, raw) in data_lines(text) {
        let err = |msg: String| TkgError::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 2 && f.len() != 3 {
            return Err(err(format!("expected 2 or 3 tab-separated fields, got {}", f.len())));
        }
        let s = source
            .get(f[0])
            .ok_or_else(|| err(format!("unknown source entity `{}`", f[0])))?;
        let t = target
            .get(f[1])
            .ok_or_else(|| err(format!("unknown target entity `{}`", f[1])))?;
        let pair = match f.get(2) {
            None => AlignmentPair::ground_truth(s, t),
            Some(c) => {
                let c: f64 = c
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad confidence `{c}`")))?;
                if !(-1.0..=1.0).contains(&c) {
                    return Err(err(format!("confidence {c} outside [-1, 1]")));
                }
                if c == 1.0 {
                    AlignmentPair::ground_truth(s, t)
                } else {
                    AlignmentPair::pseudo(s, t, c)
                }
            }
        };
        out.push(pair);
    }
    Ok(out)
}

pub fn load_alignments(
    path: impl AsRef<Path>,
    source: &Vocab,
    target: &Vocab,
) -> Result<AlignmentSet> {
    let path = path.as_ref();
    parse_alignments(&read(path)?, path, source, target)
}

pub fn dump_alignments(set: &AlignmentSet, source: &Vocab, target: &Vocab) -> String {
    let mut s = String::new();
    for p in set.iter() {
        s.push_str(source.name(p.source));
        s.push('\t');
        s.push_str(target.name(p.target));
        if p.provenance == Provenance::Pseudo {
            s.push_str(&format!("\t{}", p.confidence));
        }
        s.push('\n');
    }
    s
}

pub fn save_alignments(
    set: &AlignmentSet,
    source: &Vocab,
    target: &Vocab,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_file(path.as_ref(), dump_alignments(set, source, target).as_bytes())
}

/// One name per line, in id order.
pub fn dump_vocab(vocab: &Vocab) -> String {
    vocab.names().iter().map(|n| format!("{n}\n")).collect()
}

pub fn parse_vocab(text: &str) -> Vocab {
    Vocab::from_names(text.lines().filter(|l| !l.is_empty()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| TkgError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<String> {
    read(path)
}
