// scratch validation of the desk-scale training gate; removed before ship
use rand_chacha::rand_core::SeedableRng;
use xscatter_core::autoencoder::{train, AeArchitecture, AeModel, TrainConfig};
use xscatter_core::dataset::{generate_dataset, read_image, GenerationConfig};
use xscatter_core::features::{extract_patches, Patch, PatchSet};

fn main() {
    let dir = std::env::temp_dir().join("desk_ae_dataset");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = GenerationConfig {
        image_count: 100,
        image_size: 256,
        run_count: 4,
        output_dir: Some(dir.clone()),
        ..GenerationConfig::default()
    };
    let t0 = std::time::Instant::now();
    let out = generate_dataset(&cfg).unwrap();
    eprintln!("generated 100 images in {:.1}s", t0.elapsed().as_secs_f64());
    // 100 patches per image -> 10k patches
    let mut patches: Vec<Patch> = Vec::new();
    for (i, e) in out.entries.iter().enumerate() {
        let img = read_image(&dir.join(&e.path)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let set = extract_patches(&img, 100, 32, &mut rng).unwrap();
        patches.extend(set.patches);
    }
    let set = PatchSet { patch_size: 32, patches };
    eprintln!("patches: {}", set.patches.len());
    let mut model = AeModel::init(AeArchitecture::default(), 7).unwrap();
    let cfg = TrainConfig::default(); // 200 epochs, batch 64, lr 1e-2
    let t0 = std::time::Instant::now();
    train(&mut model, &set, &cfg).unwrap();
    let log = &model.train_log;
    eprintln!("trained in {:.1} min", t0.elapsed().as_secs_f64() / 60.0);
    for (i, l) in log.iter().enumerate() {
        if i < 5 || i % 20 == 0 || i == log.len() - 1 {
            eprintln!("epoch {i}: {l:.6}");
        }
    }
    let ratio = log.last().unwrap() / log[0];
    eprintln!("final/first = {:.4} (gate: <= 0.5)", ratio);
}
