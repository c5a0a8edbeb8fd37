//! Input loading, list parsing and output bookkeeping shared by the commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tkg::io::{parse_alignments, read_file};
use tkg::{load_quadruples, AlignmentSet, LoadOptions, SplitSpec, TemporalKG, Vocab};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory that records the digest of every file written to it.
pub struct OutDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes `manifest.json`: `body` plus the file digests and a digest over them.
    pub fn finish(self, mut body: Value) -> Result<()> {
        let files = serde_json::to_value(&self.files)?;
        let digest = sha256_hex(files.to_string().as_bytes());
        body["files"] = files;
        body["digest"] = json!(digest);
        let mut text = serde_json::to_string_pretty(&body)?;
        text.push('\n');
        let path = self.path("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Comma-separated values such as `0,0.1,0.2`.
pub fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| anyhow::anyhow!("bad {what} value '{s}'")))
        .collect()
}

/// `train,val,test` step counts.
pub fn parse_split(text: &str) -> Result<SplitSpec> {
    let v: Vec<u32> = parse_list(text, "split")?;
    let [train, val, test] = v[..] else {
        bail!("split needs three counts train,val,test, got '{text}'");
    };
    Ok(SplitSpec::new(train + val + test, train, val, test)?)
}

/// 70/10/20 split of `steps`.
pub fn default_split(steps: u32) -> Result<SplitSpec> {
    let train = (0.7 * f64::from(steps)).round() as u32;
    let val = (0.1 * f64::from(steps)).round() as u32;
    if train == 0 || val == 0 || train + val >= steps {
        bail!("{steps} steps are too few for a train/val/test split");
    }
    Ok(SplitSpec::new(steps, train, val, steps - train - val)?)
}

/// Source and target graphs sharing one relation vocabulary, plus alignments.
pub struct Inputs {
    pub source: TemporalKG,
    pub target: TemporalKG,
    pub alignments: AlignmentSet,
    /// Digests of the three input files.
    pub digests: Value,
}

fn rebuild(kg: &TemporalKG, entities: Vocab, relations: &Vocab) -> Result<TemporalKG> {
    Ok(TemporalKG::new(entities, relations.clone(), kg.quadruples().to_vec(), kg.horizon())?)
}

/// Loads the three input files. The source keeps only the training span;
/// entities named only in the alignment file join the vocabularies.
pub fn load_inputs(source: &Path, target: &Path, align: &Path, split: &SplitSpec) -> Result<Inputs> {
    let opts = LoadOptions { horizon: Some(split.total_steps), ..LoadOptions::default() };
    let src = load_quadruples(source, Vocab::new(), Vocab::new(), &opts)?;
    let tgt = load_quadruples(target, Vocab::new(), src.relations().clone(), &opts)?;
    let text = read_file(align)?;
    let (mut src_names, mut tgt_names) = (src.entities().clone(), tgt.entities().clone());
    for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        let mut f = line.split('\t');
        if let (Some(s), Some(t)) = (f.next(), f.next()) {
            src_names.intern(s);
            tgt_names.intern(t);
        }
    }
    let relations = tgt.relations().clone();
    let train_only = src.quadruples().iter().copied().filter(|q| q.time < split.train_steps).collect();
    let src = TemporalKG::new(src_names, relations.clone(), train_only, split.train_steps)?;
    let tgt = rebuild(&tgt, tgt_names, &relations)?;
    let alignments = parse_alignments(&text, align, src.entities(), tgt.entities())?;
    let digest = |p: &Path| -> Result<String> {
        Ok(sha256_hex(&fs::read(p).with_context(|| format!("reading {}", p.display()))?))
    };
    let digests = json!({
        "source": digest(source)?,
        "target": digest(target)?,
        "alignments": digest(align)?,
    });
    Ok(Inputs { source: src, target: tgt, alignments, digests })
}

/// Quadruples of `path` over fixed vocabularies; unknown names are errors.
pub fn load_strict(path: &Path, entities: &Vocab, relations: &Vocab, horizon: u32) -> Result<TemporalKG> {
    let opts = LoadOptions { strict: true, horizon: Some(horizon), ..LoadOptions::default() };
    load_quadruples(path, entities.clone(), relations.clone(), &opts)
        .with_context(|| format!("{} does not fit the checkpoint vocabulary", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_and_lists() {
        let s = parse_split("28,4,8").unwrap();
        assert_eq!((s.total_steps, s.test_start()), (40, 32));
        assert_eq!(default_split(40).unwrap(), s);
        assert!(parse_split("28,4").is_err());
        assert!(default_split(3).is_err());
        assert_eq!(parse_list::<f64>("0, 0.5", "x").unwrap(), vec![0.0, 0.5]);
        assert!(parse_list::<usize>("1,a", "n").is_err());
    }

    #[test]
    fn alignment_only_entities_join_the_vocabulary() {
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        fs::write(p("s.tsv"), "a\tr1\tb\t0\nb\tr2\ta\t5\n").unwrap();
        fs::write(p("t.tsv"), "x\tr2\ty\t1\n").unwrap();
        fs::write(p("a.tsv"), "a\tx\nb\tz\n").unwrap();
        let split = SplitSpec::new(6, 4, 1, 1).unwrap();
        let inp = load_inputs(&p("s.tsv"), &p("t.tsv"), &p("a.tsv"), &split).unwrap();
        assert_eq!(inp.source.len(), 1);
        assert_eq!(inp.source.horizon(), 4);
        assert_eq!(inp.target.entities().names(), ["x", "y", "z"]);
        assert_eq!(inp.source.relations(), inp.target.relations());
        assert_eq!(inp.target.quadruples()[0].relation, 1);
        assert_eq!(inp.alignments.target_of(1), Some(2));
    }
}
