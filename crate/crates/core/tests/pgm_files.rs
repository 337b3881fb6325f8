use percdetect::pgm::{load_pgm, parse_pgm, save_pgm, GrayscaleImage, PgmFormat};
use percdetect::Error;

#[test]
fn plain_and_binary_files_load_identically() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("a.pgm");
    let binary = dir.path().join("b.pgm");
    std::fs::write(&plain, "P2\n# two by two\n2 2\n255\n0 255 128 64\n").unwrap();
    let mut raw = b"P5 2 2 255\n".to_vec();
    raw.extend([0u8, 255, 128, 64]);
    std::fs::write(&binary, raw).unwrap();
    let a = load_pgm(&plain).unwrap();
    let b = load_pgm(&binary).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.pixels(), &[0, 255, 128, 64]);
    assert_eq!((a.pixel(1, 0), a.pixel(0, 1)), (255, 128));
}

#[test]
fn save_then_load_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let img = GrayscaleImage::new(3, 2, 1000, vec![0, 1, 999, 1000, 500, 256]).unwrap();
    for format in [PgmFormat::Plain, PgmFormat::Binary] {
        let path = dir.path().join(format!("{format:?}.pgm"));
        save_pgm(&path, &img, format).unwrap();
        assert_eq!(load_pgm(&path).unwrap(), img);
    }
}

#[test]
fn malformed_inputs_have_distinct_messages() {
    let cases: [&[u8]; 4] = [b"P7\n1 1\n255\n0", b"P2\n1\n", b"P2\n2 2\n255\n1 2 3", b"P2\n1 1\n255\n300"];
    let messages: Vec<String> = cases.iter().map(|c| parse_pgm(c).unwrap_err().to_string()).collect();
    for (i, a) in messages.iter().enumerate() {
        for b in &messages[i + 1..] {
            assert_ne!(a, b);
        }
    }
    assert!(messages[2].starts_with("unexpected end of pixel data"));
    assert!(matches!(
        load_pgm("/nonexistent/file.pgm"),
        Err(Error::Io { .. })
    ));
}
