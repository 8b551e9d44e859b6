use lfaa_danet::checkpoint::{from_bytes, load, save, to_bytes, MAGIC, VERSION};
use lfaa_danet::{NetworkConfig, NetworkParams};

fn cfg() -> NetworkConfig {
    NetworkConfig { alpha_s: 4, shears: vec![-6.0, 0.0, 6.0], leaky_slope: 0.2 }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

#[test]
fn round_trip_through_file() {
    let np = NetworkParams::<f32>::init(cfg(), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.da2n");
    save(&np, &path).unwrap();
    let back: NetworkParams<f32> = load(&path).unwrap();
    assert_eq!(back, np);
}

#[test]
fn layout() {
    let np = NetworkParams::<f32>::init(cfg(), 1).unwrap();
    let b = to_bytes(&np);
    assert_eq!(&b[..4], MAGIC);
    assert_eq!(u32_at(&b, 4), VERSION);
    let count = u32_at(&b, 8) as usize;
    assert_eq!(count, np.params.len() + 3);
    // Walk the table by hand.
    let mut at = 12;
    let mut names = Vec::new();
    let mut sizes = Vec::new();
    for _ in 0..count {
        let len = u32_at(&b, at) as usize;
        names.push(String::from_utf8(b[at + 4..at + 4 + len].to_vec()).unwrap());
        at += 4 + len;
        let ndim = u32_at(&b, at) as usize;
        let dims: Vec<usize> = (0..ndim).map(|i| u32_at(&b, at + 4 + 4 * i) as usize).collect();
        sizes.push(dims.iter().product::<usize>());
        at += 4 + 4 * ndim;
    }
    assert_eq!(&names[..3], ["meta.alpha_s", "meta.leaky_slope", "meta.shears"]);
    assert_eq!(names[3], np.params.tensors()[0].name);
    assert_eq!(b.len(), at + 4 * sizes.iter().sum::<usize>());
    // Data follows in declaration order: alpha_s, slope, shears, first tensor.
    let f = |i: usize| f32::from_le_bytes(b[at + 4 * i..at + 4 * i + 4].try_into().unwrap());
    assert_eq!(f(0), 4.0);
    assert_eq!(f(1), 0.2);
    assert_eq!([f(2), f(3), f(4)], [-6.0, 0.0, 6.0]);
    assert_eq!(f(5), np.params.tensors()[0].data[0]);
}

#[test]
fn f64_params_are_stored_as_f32() {
    let np = NetworkParams::<f64>::init(cfg(), 2).unwrap();
    let back: NetworkParams<f64> = from_bytes(&to_bytes(&np)).unwrap();
    for (a, b) in np.params.tensors().iter().zip(back.params.tensors()) {
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_eq!(*y, *x as f32 as f64);
        }
    }
}

#[test]
fn corrupt_files_are_rejected() {
    let np = NetworkParams::<f32>::init(cfg(), 3).unwrap();
    let good = to_bytes(&np);
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(from_bytes::<f32>(&bad_magic).is_err());
    let mut bad_version = good.clone();
    bad_version[4] = 9;
    assert!(from_bytes::<f32>(&bad_version).is_err());
    assert!(from_bytes::<f32>(&good[..good.len() - 1]).is_err());
    let mut trailing = good.clone();
    trailing.push(0);
    assert!(from_bytes::<f32>(&trailing).is_err());
    let mut nan = good.clone();
    let n = nan.len();
    nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(from_bytes::<f32>(&nan).unwrap_err().is_numerical());
    assert!(from_bytes::<f32>(&[]).is_err());
}
