//! Readers and writers for the interchange files.
//!
//! | file               | shape                                                           |
//! |--------------------|-----------------------------------------------------------------|
//! | vocabulary.json    | `{"name", "classes": [{"id", "name", "synonyms"}]}`             |
//! | *.jsonl            | one record per line, `\n` terminated                            |
//! | groundtruth.json   | COCO subset `{images, annotations, categories}`, bbox `x,y,w,h` |
//! | proposals.jsonl    | `{"image_id", "boxes", "objectness", "embedding_keys"}`         |
//! | groups.json        | `{"<class id>": "base" \| "novel"}`                              |

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use crate::domain::{BBox, ClassEntry, ClassId, GroundTruthBox, ImageRecord, Proposal, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::Split;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    name: String,
    classes: Vec<ClassEntry>,
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary> {
    let file: VocabularyFile = parse_json(&read_text(path)?, path)?;
    Vocabulary::new(file.name, file.classes)
}

pub fn vocabulary_to_json(vocab: &Vocabulary) -> String {
    let file = VocabularyFile {
        name: vocab.name().to_string(),
        classes: vocab.classes().to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("vocabulary serializes")
}

/// Parses one record per non-blank line; errors carry 1-based line numbers.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_jsonl(&read_text(path)?, path)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).expect("record serializes");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fails on the first image id seen twice.
pub fn ensure_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateImage(id.to_string()));
        }
    }
    Ok(())
}

/// Accepts a JSON string or integer image id.
fn id_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Text(String),
        Int(i64),
    }
    Ok(match Id::deserialize(d)? {
        Id::Text(s) => s,
        Id::Int(i) => i.to_string(),
    })
}

#[derive(Deserialize)]
struct CocoImage {
    #[serde(deserialize_with = "id_string")]
    id: String,
    width: f64,
    height: f64,
    #[serde(default)]
    file_name: Option<String>,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    #[serde(deserialize_with = "id_string")]
    image_id: String,
    category_id: u32,
    bbox: [f64; 4],
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u32,
    #[allow(dead_code)]
    name: String,
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

/// Ground truth converted to corner boxes, with the image table.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub images: Vec<ImageRecord>,
    pub boxes: Vec<GroundTruthBox>,
}

impl GroundTruth {
    pub fn image_map(&self) -> HashMap<String, ImageRecord> {
        self.images.iter().map(|i| (i.image_id.clone(), i.clone())).collect()
    }

    pub fn boxes_by_image(&self) -> BTreeMap<&str, Vec<GroundTruthBox>> {
        let mut map: BTreeMap<&str, Vec<GroundTruthBox>> = BTreeMap::new();
        for img in &self.images {
            map.entry(&img.image_id).or_default();
        }
        for b in &self.boxes {
            map.entry(&b.image_id).or_default().push(b.clone());
        }
        map
    }
}

pub fn parse_groundtruth(text: &str, path: &Path) -> Result<GroundTruth> {
    let file: CocoFile = parse_json(text, path)?;
    ensure_unique_ids(file.images.iter().map(|i| i.id.as_str()))?;
    let mut images = Vec::with_capacity(file.images.len());
    for img in file.images {
        if !(img.width > 0.0 && img.height > 0.0) {
            return Err(Error::Data(format!("image {} has non-positive size", img.id)));
        }
        images.push(ImageRecord {
            image_id: img.id,
            width: img.width,
            height: img.height,
            file_name: img.file_name,
        });
    }
    let known: HashSet<&str> = images.iter().map(|i| i.image_id.as_str()).collect();
    let categories: HashSet<u32> = file.categories.iter().map(|c| c.id).collect();
    let mut boxes = Vec::with_capacity(file.annotations.len());
    for a in file.annotations {
        if !known.contains(a.image_id.as_str()) {
            return Err(Error::Data(format!("annotation references unknown image {}", a.image_id)));
        }
        if !categories.is_empty() && !categories.contains(&a.category_id) {
            return Err(Error::Data(format!("annotation uses undeclared category {}", a.category_id)));
        }
        let [x, y, w, h] = a.bbox;
        let bbox = BBox::from_xywh(x, y, w, h);
        if !bbox.is_valid() {
            return Err(Error::Data(format!("degenerate ground-truth box on image {}", a.image_id)));
        }
        boxes.push(GroundTruthBox {
            image_id: a.image_id,
            bbox,
            class_id: ClassId(a.category_id),
        });
    }
    Ok(GroundTruth { images, boxes })
}

pub fn read_groundtruth(path: &Path) -> Result<GroundTruth> {
    parse_groundtruth(&read_text(path)?, path)
}

/// One line of proposals.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalLine {
    pub image_id: String,
    pub boxes: Vec<[f64; 4]>,
    pub objectness: Vec<f64>,
    pub embedding_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageProposals {
    pub image_id: String,
    pub proposals: Vec<Proposal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedProposals {
    pub images: Vec<ImageProposals>,
    /// Boxes that had to be clamped into their image.
    pub clamped: usize,
}

/// Validates proposal lines, clamping boxes to image bounds when the image
/// size is known.
pub fn proposals_from_lines(
    lines: Vec<ProposalLine>,
    image_sizes: Option<&HashMap<String, ImageRecord>>,
) -> Result<LoadedProposals> {
    ensure_unique_ids(lines.iter().map(|l| l.image_id.as_str()))?;
    let mut clamped = 0;
    let mut images = Vec::with_capacity(lines.len());
    for line in lines {
        let n = line.boxes.len();
        if line.objectness.len() != n || line.embedding_keys.len() != n {
            return Err(Error::Data(format!(
                "image {}: {} boxes, {} objectness values, {} embedding keys",
                line.image_id,
                n,
                line.objectness.len(),
                line.embedding_keys.len()
            )));
        }
        let size = match image_sizes {
            Some(map) => Some(
                map.get(&line.image_id)
                    .ok_or_else(|| Error::Data(format!("proposals for unknown image {}", line.image_id)))?,
            ),
            None => None,
        };
        let mut proposals = Vec::with_capacity(n);
        for ((b, objectness), key) in line.boxes.into_iter().zip(line.objectness).zip(line.embedding_keys) {
            let mut bbox = BBox::from(b);
            if !bbox.is_valid() {
                return Err(Error::Data(format!("image {}: invalid box {b:?}", line.image_id)));
            }
            if !(0.0..=1.0).contains(&objectness) {
                return Err(Error::Data(format!(
                    "image {}: objectness {objectness} outside [0, 1]",
                    line.image_id
                )));
            }
            if let Some(img) = size {
                if bbox.clamp_to(img.width, img.height) {
                    clamped += 1;
                }
                if !bbox.is_valid() {
                    return Err(Error::Data(format!(
                        "image {}: box {b:?} lies outside the image",
                        line.image_id
                    )));
                }
            }
            proposals.push(Proposal {
                image_id: line.image_id.clone(),
                bbox,
                embedding_key: key,
                objectness,
            });
        }
        images.push(ImageProposals {
            image_id: line.image_id,
            proposals,
        });
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} proposal boxes to image bounds");
    }
    Ok(LoadedProposals { images, clamped })
}

pub fn read_proposals(path: &Path, image_sizes: Option<&HashMap<String, ImageRecord>>) -> Result<LoadedProposals> {
    proposals_from_lines(read_jsonl(path)?, image_sizes)
}

pub fn read_groups(path: &Path) -> Result<BTreeMap<ClassId, Split>> {
    let raw: BTreeMap<String, Split> = parse_json(&read_text(path)?, path)?;
    groups_from_map(raw)
}

/// Converts `{"<class id>": split}` into typed keys.
pub fn groups_from_map(raw: BTreeMap<String, Split>) -> Result<BTreeMap<ClassId, Split>> {
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<u32>()
                .map(|id| (ClassId(id), v))
                .map_err(|_| Error::Data(format!("group key \"{k}\" is not a class id")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CaptionRecord;

    #[test]
    fn jsonl_reports_line_numbers() {
        let text = "{\"image_id\":\"a\",\"caption\":\"x\",\"source\":\"file\"}\n\n{\"image_id\":3}\n";
        match parse_jsonl::<CaptionRecord>(text, Path::new("c.jsonl")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_jsonl::<CaptionRecord>("", Path::new("c")).unwrap().is_empty());
    }

    #[test]
    fn jsonl_writes_newline_terminated_lines() {
        let recs = vec![CaptionRecord {
            image_id: "a".into(),
            caption: "hi".into(),
            source: "file".into(),
        }];
        assert_eq!(to_jsonl(&recs), "{\"image_id\":\"a\",\"caption\":\"hi\",\"source\":\"file\"}\n");
        assert_eq!(to_jsonl::<CaptionRecord>(&[]), "");
    }

    #[test]
    fn groundtruth_converts_xywh() {
        let text = r#"{"images":[{"id":7,"width":100,"height":50}],
            "annotations":[{"id":1,"image_id":7,"category_id":2,"bbox":[10,5,20,10]}],
            "categories":[{"id":2,"name":"dog"}]}"#;
        let gt = parse_groundtruth(text, Path::new("g")).unwrap();
        assert_eq!(gt.images[0].image_id, "7");
        assert_eq!(gt.boxes[0].bbox, BBox::new(10.0, 5.0, 30.0, 15.0));
        assert_eq!(gt.boxes[0].class_id, ClassId(2));
    }

    #[test]
    fn groundtruth_errors() {
        let dup = r#"{"images":[{"id":"a","width":1,"height":1},{"id":"a","width":1,"height":1}],"annotations":[]}"#;
        assert!(matches!(parse_groundtruth(dup, Path::new("g")), Err(Error::DuplicateImage(_))));
        let orphan = r#"{"images":[],"annotations":[{"image_id":"z","category_id":1,"bbox":[0,0,1,1]}]}"#;
        assert!(parse_groundtruth(orphan, Path::new("g")).is_err());
        let flat = r#"{"images":[{"id":"a","width":9,"height":9}],"annotations":[{"image_id":"a","category_id":1,"bbox":[0,0,0,1]}]}"#;
        assert!(parse_groundtruth(flat, Path::new("g")).is_err());
    }

    fn line(boxes: Vec<[f64; 4]>) -> ProposalLine {
        let n = boxes.len();
        ProposalLine {
            image_id: "a".into(),
            boxes,
            objectness: vec![0.5; n],
            embedding_keys: (0..n).map(|i| format!("a/{i}")).collect(),
        }
    }

    #[test]
    fn proposals_are_clamped() {
        let sizes: HashMap<_, _> = [(
            "a".to_string(),
            ImageRecord {
                image_id: "a".into(),
                width: 100.0,
                height: 100.0,
                file_name: None,
            },
        )]
        .into_iter()
        .collect();
        let loaded =
            proposals_from_lines(vec![line(vec![[-3.0, 0.0, 50.0, 101.0], [1.0, 1.0, 2.0, 2.0]])], Some(&sizes))
                .unwrap();
        assert_eq!(loaded.clamped, 1);
        assert_eq!(loaded.images[0].proposals[0].bbox, BBox::new(0.0, 0.0, 50.0, 100.0));

        assert!(proposals_from_lines(vec![line(vec![[120.0, 0.0, 130.0, 10.0]])], Some(&sizes)).is_err());
        let unclamped = proposals_from_lines(vec![line(vec![[120.0, 0.0, 130.0, 10.0]])], None).unwrap();
        assert_eq!(unclamped.clamped, 0);
    }

    #[test]
    fn proposal_shape_errors() {
        let mut l = line(vec![[0.0, 0.0, 1.0, 1.0]]);
        l.objectness.clear();
        assert!(proposals_from_lines(vec![l], None).is_err());
        assert!(proposals_from_lines(vec![line(vec![[2.0, 0.0, 1.0, 1.0]])], None).is_err());
        let mut l = line(vec![[0.0, 0.0, 1.0, 1.0]]);
        l.objectness = vec![1.5];
        assert!(proposals_from_lines(vec![l], None).is_err());
        assert!(matches!(
            proposals_from_lines(vec![line(vec![]), line(vec![])], None),
            Err(Error::DuplicateImage(_))
        ));
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.json");
        fs::write(&p, r#"{"name":"demo","classes":[{"id":1,"name":"TV","synonyms":["Television"]},{"id":2,"name":"cat"}]}"#)
            .unwrap();
        let v = read_vocabulary(&p).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.get(ClassId(2)).unwrap().synonyms.len(), 0);
        fs::write(&p, vocabulary_to_json(&v)).unwrap();
        assert_eq!(read_vocabulary(&p).unwrap(), v);

        fs::write(&p, r#"{"name":"bad","classes":[{"id":1,"name":"TV","synonyms":["Television"]},{"id":2,"name":"television"}]}"#)
            .unwrap();
        assert!(matches!(read_vocabulary(&p), Err(Error::InvalidVocabulary(_))));
    }

    #[test]
    fn groups_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        fs::write(&p, r#"{"1":"base","2":"novel"}"#).unwrap();
        let g = read_groups(&p).unwrap();
        assert_eq!(g[&ClassId(2)], Split::Novel);
        fs::write(&p, r#"{"x":"base"}"#).unwrap();
        assert!(read_groups(&p).is_err());
    }
}
