//! Corpus ingestion: scan a directory of word recordings into a manifest,
//! pair parallel utterances across speakers, and build leave-one-out splits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::audio::wav_duration;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerRole {
    Dysarthric,
    Control,
}

/// One word recording.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Utterance {
    pub utterance_id: String,
    pub speaker_id: String,
    pub word_id: String,
    pub audio_path: PathBuf,
    pub transcript_path: Option<PathBuf>,
    pub duration_s: f64,
}

/// All utterances plus speaker role tags.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub utterances: Vec<Utterance>,
    pub speakers: BTreeMap<String, SpeakerRole>,
}

/// One leave-one-out fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train_speakers: Vec<String>,
    pub eval_speaker: String,
    pub train_utts: Vec<String>,
    pub eval_utts: Vec<String>,
}

/// Filename pattern with named captures `speaker` and `word`, applied to the
/// audio file stem.
#[derive(Debug, Clone)]
pub struct LayoutSpec {
    regex: Regex,
}

impl LayoutSpec {
    pub fn new(pattern: &str) -> Result<Self> {
        let regex = Regex::new(pattern)
            .map_err(|e| Error::Config(format!("invalid layout pattern: {e}")))?;
        let names: Vec<_> = regex.capture_names().flatten().collect();
        if !names.contains(&"speaker") || !names.contains(&"word") {
            return Err(Error::Config(
                "layout pattern needs named captures (?P<speaker>..) and (?P<word>..)".into(),
            ));
        }
        Ok(LayoutSpec { regex })
    }

    /// `<speaker>_<word>` stems, e.g. `D1_w03.wav`.
    pub fn default_flat() -> Self {
        LayoutSpec::new(r"^(?P<speaker>[^_]+)_(?P<word>.+)$").expect("static pattern")
    }

    pub fn parse_stem(&self, stem: &str) -> Option<(String, String)> {
        self.regex.captures(stem).and_then(|c| {
            Some((
                c.name("speaker")?.as_str().to_string(),
                c.name("word")?.as_str().to_string(),
            ))
        })
    }
}

fn collect_wavs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .extension()
                .map_or(false, |e| e.eq_ignore_ascii_case("wav"))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Scan `root_dir` for WAV files matching `layout`, read durations from the
/// headers (in parallel), and assemble a manifest. Unreadable or unmatched
/// files are skipped with a warning; zero usable files is a hard error.
pub fn build_manifest(
    root_dir: impl AsRef<Path>,
    layout: &LayoutSpec,
    roles: &BTreeMap<String, SpeakerRole>,
) -> Result<(Manifest, Vec<String>)> {
    let root = root_dir.as_ref();
    let files = collect_wavs(root)?;
    let mut warnings = Vec::new();
    let scanned = par::map_slice(&files, |path| {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        match layout.parse_stem(stem) {
            None => Err(format!("{}: name does not match layout", path.display())),
            Some((speaker, word)) => match wav_duration(path) {
                Err(e) => Err(format!("{}: {e}", path.display())),
                Ok((_sr, dur)) => {
                    let transcript = path.with_extension("txt");
                    Ok(Utterance {
                        utterance_id: format!("{speaker}_{word}"),
                        speaker_id: speaker,
                        word_id: word,
                        audio_path: path.clone(),
                        transcript_path: transcript.exists().then_some(transcript),
                        duration_s: dur,
                    })
                }
            },
        }
    });
    let mut utterances = Vec::new();
    let mut seen = BTreeSet::new();
    for item in scanned {
        match item {
            Ok(u) => {
                if !seen.insert((u.speaker_id.clone(), u.word_id.clone())) {
                    warnings.push(format!(
                        "{}: duplicate (speaker, word) pair, skipped",
                        u.audio_path.display()
                    ));
                    continue;
                }
                utterances.push(u);
            }
            Err(w) => warnings.push(w),
        }
    }
    if utterances.is_empty() {
        return Err(Error::Corpus(format!(
            "no utterances found under {}",
            root.display()
        )));
    }
    let mut speakers = BTreeMap::new();
    for u in &utterances {
        let role = roles
            .get(&u.speaker_id)
            .copied()
            .unwrap_or(SpeakerRole::Dysarthric);
        speakers.insert(u.speaker_id.clone(), role);
    }
    Ok((
        Manifest {
            utterances,
            speakers,
        },
        warnings,
    ))
}

impl Manifest {
    pub fn by_speaker(&self, speaker: &str) -> Vec<&Utterance> {
        self.utterances
            .iter()
            .filter(|u| u.speaker_id == speaker)
            .collect()
    }

    pub fn get(&self, utterance_id: &str) -> Option<&Utterance> {
        self.utterances
            .iter()
            .find(|u| u.utterance_id == utterance_id)
    }

    /// Line-delimited JSON, one utterance per line.
    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for u in &self.utterances {
            let mut line = serde_json::to_vec(u)?;
            line.push(b'\n');
            f.write_all(&line).map_err(|e| Error::io(path, e))?;
        }
        // Speaker roles ride along in a sidecar for reload.
        let roles_path = path.with_extension("speakers.json");
        let roles = serde_json::to_vec_pretty(&self.speakers)?;
        std::fs::write(&roles_path, roles).map_err(|e| Error::io(&roles_path, e))?;
        Ok(())
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut utterances = Vec::new();
        for line in std::io::BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            utterances.push(serde_json::from_str(&line)?);
        }
        let roles_path = path.with_extension("speakers.json");
        let speakers: BTreeMap<String, SpeakerRole> = if roles_path.exists() {
            serde_json::from_slice(
                &std::fs::read(&roles_path).map_err(|e| Error::io(&roles_path, e))?,
            )?
        } else {
            utterances
                .iter()
                .map(|u: &Utterance| (u.speaker_id.clone(), SpeakerRole::Dysarthric))
                .collect()
        };
        Ok(Manifest {
            utterances,
            speakers,
        })
    }
}

/// Pair utterances of two speakers on equal `word_id`; returns the pairs and
/// the number of unmatched words dropped.
pub fn pair_parallel<'a>(
    m: &'a Manifest,
    src: &str,
    tgt: &str,
) -> Result<(Vec<(&'a Utterance, &'a Utterance)>, usize)> {
    for sp in [src, tgt] {
        if !m.speakers.contains_key(sp) {
            return Err(Error::Corpus(format!("speaker {sp} not in manifest")));
        }
    }
    let tgt_by_word: BTreeMap<&str, &Utterance> = m
        .by_speaker(tgt)
        .into_iter()
        .map(|u| (u.word_id.as_str(), u))
        .collect();
    let src_utts = m.by_speaker(src);
    let mut pairs = Vec::new();
    let mut dropped = 0usize;
    for s in &src_utts {
        match tgt_by_word.get(s.word_id.as_str()) {
            Some(t) => pairs.push((*s, *t)),
            None => dropped += 1,
        }
    }
    dropped += tgt_by_word.len() - pairs.len();
    if pairs.is_empty() {
        return Err(Error::Corpus(format!(
            "no parallel words between {src} and {tgt}"
        )));
    }
    Ok((pairs, dropped))
}

/// Four leave-one-out folds over a group of exactly four speakers.
pub fn leave_one_out_splits(
    m: &Manifest,
    group: &[String],
) -> Result<(Vec<FoldSplit>, Vec<String>)> {
    if group.len() != 4 {
        return Err(Error::Corpus(format!(
            "leave-one-out group must have 4 speakers, got {}",
            group.len()
        )));
    }
    let mut warnings = Vec::new();
    let mut counts = Vec::new();
    for sp in group {
        if !m.speakers.contains_key(sp) {
            return Err(Error::Corpus(format!("speaker {sp} not in manifest")));
        }
        counts.push(m.by_speaker(sp).len());
    }
    if counts.windows(2).any(|w| w[0] != w[1]) {
        warnings.push(format!(
            "unequal utterance counts across group: {counts:?}; proceeding"
        ));
    }
    let folds = group
        .iter()
        .enumerate()
        .map(|(fold_id, eval_speaker)| {
            let train_speakers: Vec<String> = group
                .iter()
                .filter(|s| *s != eval_speaker)
                .cloned()
                .collect();
            let train_utts = train_speakers
                .iter()
                .flat_map(|sp| m.by_speaker(sp))
                .map(|u| u.utterance_id.clone())
                .collect();
            let eval_utts = m
                .by_speaker(eval_speaker)
                .iter()
                .map(|u| u.utterance_id.clone())
                .collect();
            FoldSplit {
                fold_id,
                train_speakers,
                eval_speaker: eval_speaker.clone(),
                train_utts,
                eval_utts,
            }
        })
        .collect();
    Ok((folds, warnings))
}

/// Speaker grouping file written next to a synthetic corpus and consumed by
/// `ingest`: role lists plus the dysarthric-to-control pairing.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct SpeakerMap {
    pub dysarthric: Vec<String>,
    pub controls: Vec<String>,
    /// dysarthric speaker -> matched control speaker
    pub pairs: BTreeMap<String, String>,
}

impl SpeakerMap {
    pub fn roles(&self) -> BTreeMap<String, SpeakerRole> {
        let mut map = BTreeMap::new();
        for s in &self.dysarthric {
            map.insert(s.clone(), SpeakerRole::Dysarthric);
        }
        for s in &self.controls {
            map.insert(s.clone(), SpeakerRole::Control);
        }
        map
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{write_wav, Waveform};

    fn synth_dir(spec: &[(&str, &[&str])]) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "dvc-corpus-test-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::remove_dir_all(&dir).ok();
        for (speaker, words) in spec {
            for word in *words {
                let path = dir.join(speaker).join(format!("{speaker}_{word}.wav"));
                let w = Waveform::new(vec![0.1; 800], 16000).unwrap();
                write_wav(&path, &w).unwrap();
            }
        }
        dir
    }

    fn no_roles() -> BTreeMap<String, SpeakerRole> {
        BTreeMap::new()
    }

    #[test]
    fn empty_directory_is_hard_error() {
        let dir = std::env::temp_dir().join(format!("dvc-corpus-empty-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let err = build_manifest(&dir, &LayoutSpec::default_flat(), &no_roles());
        assert!(err.is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn scans_files_and_parses_ids() {
        let dir = synth_dir(&[("A", &["w1", "w2", "w3"]), ("B", &["w1", "w2", "w3"])]);
        let (m, warnings) = build_manifest(&dir, &LayoutSpec::default_flat(), &no_roles()).unwrap();
        assert_eq!(m.utterances.len(), 6);
        assert!(warnings.is_empty());
        let words: BTreeSet<_> = m
            .utterances
            .iter()
            .filter(|u| u.speaker_id == "A")
            .map(|u| u.word_id.clone())
            .collect();
        assert_eq!(words, BTreeSet::from(["w1".into(), "w2".into(), "w3".into()]));
        assert!(m.utterances.iter().all(|u| (u.duration_s - 0.05).abs() < 1e-9));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn deterministic_given_same_contents() {
        let dir = synth_dir(&[("A", &["w1", "w2"]), ("B", &["w1", "w2"])]);
        let (m1, _) = build_manifest(&dir, &LayoutSpec::default_flat(), &no_roles()).unwrap();
        let (m2, _) = build_manifest(&dir, &LayoutSpec::default_flat(), &no_roles()).unwrap();
        assert_eq!(m1.utterances, m2.utterances);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn manifest_jsonl_round_trip() {
        let dir = synth_dir(&[("A", &["w1"]), ("B", &["w1"])]);
        let mut roles = BTreeMap::new();
        roles.insert("A".to_string(), SpeakerRole::Dysarthric);
        roles.insert("B".to_string(), SpeakerRole::Control);
        let (m, _) = build_manifest(&dir, &LayoutSpec::default_flat(), &roles).unwrap();
        let path = dir.join("manifest.jsonl");
        m.save_jsonl(&path).unwrap();
        let loaded = Manifest::load_jsonl(&path).unwrap();
        assert_eq!(loaded.utterances, m.utterances);
        assert_eq!(loaded.speakers.get("B"), Some(&SpeakerRole::Control));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn pairing_matches_word_intersection() {
        let dir = synth_dir(&[("A", &["wa", "wb"]), ("B", &["wb", "wc"])]);
        let (m, _) = build_manifest(&dir, &LayoutSpec::default_flat(), &no_roles()).unwrap();
        let (pairs, dropped) = pair_parallel(&m, "A", "B").unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].0.word_id, "wb");
        assert_eq!(dropped, 2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn disjoint_words_error() {
        let dir = synth_dir(&[("A", &["wa"]), ("B", &["wb"])]);
        let (m, _) = build_manifest(&dir, &LayoutSpec::default_flat(), &no_roles()).unwrap();
        assert!(pair_parallel(&m, "A", "B").is_err());
        assert!(pair_parallel(&m, "A", "Z").is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn pairing_symmetric_up_to_order() {
        let dir = synth_dir(&[("A", &["w1", "w2"]), ("B", &["w1", "w2"])]);
        let (m, _) = build_manifest(&dir, &LayoutSpec::default_flat(), &no_roles()).unwrap();
        let (ab, _) = pair_parallel(&m, "A", "B").unwrap();
        let (ba, _) = pair_parallel(&m, "B", "A").unwrap();
        let ab_rev: Vec<_> = ab.iter().map(|(s, t)| (*t, *s)).collect();
        let ba_pairs: Vec<_> = ba.iter().map(|(s, t)| (*s, *t)).collect();
        assert_eq!(ab_rev, ba_pairs);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn loo_splits_cover_and_partition() {
        let speakers: Vec<String> = ["A", "B", "C", "D"].map(String::from).to_vec();
        let dir = synth_dir(&[
            ("A", &["w1", "w2", "w3"]),
            ("B", &["w1", "w2", "w3"]),
            ("C", &["w1", "w2", "w3"]),
            ("D", &["w1", "w2", "w3"]),
        ]);
        let (m, _) = build_manifest(&dir, &LayoutSpec::default_flat(), &no_roles()).unwrap();
        let (folds, warnings) = leave_one_out_splits(&m, &speakers).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(folds.len(), 4);
        let evals: BTreeSet<_> = folds.iter().map(|f| f.eval_speaker.clone()).collect();
        assert_eq!(evals.len(), 4);
        for f in &folds {
            assert_eq!(f.train_utts.len(), 9);
            assert_eq!(f.eval_utts.len(), 3);
            assert!(!f.train_speakers.contains(&f.eval_speaker));
            let train: BTreeSet<_> = f.train_utts.iter().collect();
            assert!(f.eval_utts.iter().all(|u| !train.contains(u)));
            assert_eq!(f.train_utts.len() + f.eval_utts.len(), 12);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn loo_group_size_enforced_and_unequal_warns() {
        let dir = synth_dir(&[
            ("A", &["w1", "w2"]),
            ("B", &["w1"]),
            ("C", &["w1"]),
            ("D", &["w1"]),
        ]);
        let (m, _) = build_manifest(&dir, &LayoutSpec::default_flat(), &no_roles()).unwrap();
        let bad: Vec<String> = ["A", "B"].map(String::from).to_vec();
        assert!(leave_one_out_splits(&m, &bad).is_err());
        let group: Vec<String> = ["A", "B", "C", "D"].map(String::from).to_vec();
        let (_folds, warnings) = leave_one_out_splits(&m, &group).unwrap();
        assert!(!warnings.is_empty());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn layout_spec_validation() {
        assert!(LayoutSpec::new(r"^(?P<speaker>\w+)-(?P<word>\w+)$").is_ok());
        assert!(LayoutSpec::new(r"^(?P<speaker>\w+)$").is_err());
        assert!(LayoutSpec::new(r"((").is_err());
        let uaspeech = LayoutSpec::new(r"^(?P<speaker>[A-Z0-9]+)_(?P<word>.+?)(?:_M\d+)?$").unwrap();
        let (sp, w) = uaspeech.parse_stem("M05_B2_UW45_M6").unwrap();
        assert_eq!(sp, "M05");
        assert_eq!(w, "B2_UW45");
    }
}
