mod common;

use std::fs;

use common::*;
use freqgate_data::nifti::{decode, import_nifti, parse_header, NiftiType};
use freqgate_data::volume::container_paths;
use freqgate_data::{load_volume, DataError, DatasetManifest};

#[test]
fn save_load_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_volume("vol01", [8, 16, 16], 5);
    let path = v.save(dir.path()).unwrap();
    let back = load_volume(&path).unwrap();
    assert_eq!(back.dims, v.dims);
    assert_eq!(back.spacing, v.spacing);
    assert_eq!(back.mask, v.mask);
    let bits = |x: &[f32]| x.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.image), bits(&v.image));
}

#[test]
fn truncated_payload_names_both_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_volume("vol02", [2, 4, 4], 1);
    let path = v.save(dir.path()).unwrap();
    let (_, img, _) = container_paths(dir.path(), "vol02");
    let bytes = fs::read(&img).unwrap();
    fs::write(&img, &bytes[..bytes.len() - 3]).unwrap();
    match load_volume(&path) {
        Err(DataError::SizeMismatch { expected, actual, .. }) => assert_eq!((expected, actual), (128, 125)),
        other => panic!("expected size mismatch, got {other:?}"),
    }
    let err = load_volume(&path).unwrap_err().to_string();
    assert!(err.contains("128") && err.contains("125"), "{err}");
}

#[test]
fn sidecar_dtype_and_mask_values_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_volume("vol03", [2, 4, 4], 2);
    let path = v.save(dir.path()).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replace("\"f32\"", "\"f16\"")).unwrap();
    assert!(matches!(load_volume(&path), Err(DataError::UnsupportedDtype(d)) if d == "f16"));

    v.save(dir.path()).unwrap();
    let (_, _, msk) = container_paths(dir.path(), "vol03");
    let mut m = fs::read(&msk).unwrap();
    m[7] = 3;
    fs::write(&msk, m).unwrap();
    assert!(matches!(load_volume(&path), Err(DataError::MaskValue { index: 7, .. })));
}

/// 4×4×2 int16 volume with values `x + 10·y − 100·z` (some negative), laid
/// out x fastest as NIfTI requires.
fn fixture_values() -> Vec<i16> {
    let mut v = Vec::new();
    for z in 0..2i16 {
        for y in 0..4i16 {
            for x in 0..4i16 {
                v.push(x + 10 * y - 100 * z);
            }
        }
    }
    v
}

#[test]
fn nifti_fixture_imports_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for big_endian in [false, true] {
        let values = fixture_values();
        let bytes = nifti_bytes([4, 4, 2], 4, 16, [0.5, 0.75, 2.0], &i16_payload(&values, big_endian), big_endian);
        let header = parse_header(&bytes).unwrap();
        assert_eq!(header.datatype, NiftiType::I16);
        assert_eq!(header.dims, [4, 4, 2]);
        assert_eq!(header.little_endian, !big_endian);

        let mask_vals: Vec<i16> = values.iter().map(|&v| (v > 20) as i16).collect();
        let mask = nifti_bytes([4, 4, 2], 4, 16, [0.5, 0.75, 2.0], &i16_payload(&mask_vals, big_endian), big_endian);
        let (ip, mp) = (dir.path().join("img.nii"), dir.path().join("msk.nii"));
        fs::write(&ip, &bytes).unwrap();
        fs::write(&mp, &mask).unwrap();
        let v = import_nifti(&ip, Some(&mp), "case").unwrap();
        assert_eq!(v.dims, [2, 4, 4]);
        assert_eq!(v.spacing, [2.0, 0.75, 0.5]);
        for z in 0..2 {
            for y in 0..4 {
                for x in 0..4 {
                    let expect = x as f32 + 10.0 * y as f32 - 100.0 * z as f32;
                    assert_eq!(v.image[(z * 4 + y) * 4 + x], expect);
                    assert_eq!(v.mask[(z * 4 + y) * 4 + x], (expect > 20.0) as u8);
                }
            }
        }
    }
}

#[test]
fn nifti_scaling_and_errors() {
    let values = fixture_values();
    let mut bytes = nifti_bytes([4, 4, 2], 4, 16, [1.0; 3], &i16_payload(&values, false), false);
    bytes[112..116].copy_from_slice(&2.0f32.to_le_bytes());
    bytes[116..120].copy_from_slice(&(-1.0f32).to_le_bytes());
    let (_, out) = decode(&bytes).unwrap();
    assert_eq!(out[5], 2.0 * values[5] as f64 - 1.0);

    let short = &bytes[..bytes.len() - 2];
    assert!(matches!(decode(short), Err(DataError::SizeMismatch { .. })));
    let mut gz = bytes.clone();
    gz[344..348].copy_from_slice(b"ni1\0");
    assert!(matches!(decode(&gz), Err(DataError::Nifti(_))));
    let mut odd = bytes.clone();
    odd[70..72].copy_from_slice(&1536i16.to_le_bytes());
    assert!(matches!(decode(&odd), Err(DataError::UnsupportedDtype(_))));
    assert!(matches!(decode(&bytes[..100]), Err(DataError::SizeMismatch { .. })));

    let dir = tempfile::tempdir().unwrap();
    let bad_mask: Vec<i16> = values.iter().map(|&v| (v > 20) as i16 * 2).collect();
    let (ip, mp) = (dir.path().join("a.nii"), dir.path().join("b.nii"));
    fs::write(&ip, &bytes).unwrap();
    fs::write(&mp, nifti_bytes([4, 4, 2], 4, 16, [1.0; 3], &i16_payload(&bad_mask, false), false)).unwrap();
    assert!(matches!(import_nifti(&ip, Some(&mp), "x"), Err(DataError::MaskValue { value, .. }) if value == 2.0));
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = (0..12).map(|i| format!("v{i:02}")).collect();
    let m = DatasetManifest::split(&ids, 9, 8, 3).unwrap();
    let path = dir.path().join("manifest.json");
    m.save(&path).unwrap();
    assert_eq!(DatasetManifest::load(&path).unwrap(), m);
}
