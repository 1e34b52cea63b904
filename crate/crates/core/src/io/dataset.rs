use super::{image_from_pgm, image_to_pgm, labels_from_pgm, labels_to_pgm, read_bytes, read_pgm, write_bytes, write_pgm, IoError};
use crate::synth::{DataItem, Dataset, Domain};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    class_count: usize,
    ids: Vec<String>,
}

/// Writes `DIR/<id>.pgm` images, `DIR/<id>_label.pgm` label maps and a
/// `DIR/dataset.json` manifest.
pub fn write_dataset(dir: &Path, items: &[DataItem]) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|source| IoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let class_count = items.first().map_or(2, |i| i.labels.class_count());
    for item in items {
        write_bytes(&dir.join(format!("{}.pgm", item.id)), &write_pgm(&image_to_pgm(&item.image)))?;
        write_bytes(&dir.join(format!("{}_label.pgm", item.id)), &write_pgm(&labels_to_pgm(&item.labels)))?;
    }
    let manifest = Manifest {
        class_count,
        ids: items.iter().map(|i| i.id.clone()).collect(),
    };
    super::save_json(&dir.join("dataset.json"), &manifest)
}

/// Reads a directory written by [`write_dataset`], tagging every item with `domain`.
pub fn read_dataset(dir: &Path, domain: Domain) -> Result<Dataset, IoError> {
    let manifest: Manifest = serde_json::from_slice(&read_bytes(&dir.join("dataset.json"))?)?;
    let mut items = Vec::with_capacity(manifest.ids.len());
    for id in manifest.ids {
        let image = image_from_pgm(&read_pgm(&read_bytes(&dir.join(format!("{id}.pgm")))?)?);
        let labels = labels_from_pgm(
            &read_pgm(&read_bytes(&dir.join(format!("{id}_label.pgm")))?)?,
            manifest.class_count,
        )?;
        if (labels.width(), labels.height()) != (image.width(), image.height()) {
            return Err(IoError::Invalid(format!("{id}: image and label sizes differ")));
        }
        items.push(DataItem { id, image, labels, domain });
    }
    Ok(Dataset { items })
}

/// Reads a target directory: `DIR/train` and `DIR/test` when both exist,
/// otherwise the flat directory split 2:1 (first two thirds train).
pub fn read_split_dataset(dir: &Path) -> Result<Dataset, IoError> {
    let (train, test) = (dir.join("train"), dir.join("test"));
    if train.is_dir() && test.is_dir() {
        let mut ds = read_dataset(&train, Domain::TargetTrain)?;
        ds.items.extend(read_dataset(&test, Domain::TargetTest)?.items);
        return Ok(ds);
    }
    let mut ds = read_dataset(dir, Domain::TargetTrain)?;
    let n_train = (ds.items.len() * 2).div_ceil(3);
    for item in ds.items.iter_mut().skip(n_train) {
        item.domain = Domain::TargetTest;
    }
    Ok(ds)
}
