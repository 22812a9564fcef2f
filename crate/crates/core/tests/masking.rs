use panobench::control::{latent_mask, LatentGrid};
use panobench::elements::{
    mask_elements, transfer_attributes, Element, ElementKind, ElementSet, MaskingConfig, Vocabulary, MASK_TOKEN,
};

fn latent(h: usize, w: usize, c: usize) -> LatentGrid {
    let data = (0..h * w * c).map(|i| 0.25 + (i % 13) as f32 * 0.1).collect();
    LatentGrid::new(h, w, c, data).unwrap()
}

fn within_three_sigma(successes: usize, trials: usize, p: f64) -> bool {
    let mean = trials as f64 * p;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    (successes as f64 - mean).abs() <= 3.0 * sigma
}

#[test]
fn latent_mask_extremes_are_bit_exact() {
    let z = latent(32, 24, 4);
    for seed in 0..5 {
        let (kept, _) = latent_mask(&z, 1.0, 2, seed).unwrap();
        assert_eq!(kept.to_bytes(), z.to_bytes());
        let (dropped, rec) = latent_mask(&z, 0.0, 2, seed).unwrap();
        assert!(dropped.data().iter().all(|v| v.to_bits() == 0));
        assert_eq!(rec.kept_blocks(), 0);
    }
}

#[test]
fn latent_kept_fraction_is_binomial() {
    let z = latent(64, 64, 1);
    for p in [0.5, 0.2] {
        for seed in 0..10 {
            let (_, rec) = latent_mask(&z, p, 1, seed).unwrap();
            assert!(within_three_sigma(rec.kept_blocks(), 64 * 64, p), "p={p} seed={seed}: {}", rec.kept_blocks());
        }
    }
}

#[test]
fn latent_tokens_follow_their_block() {
    let z = latent(10, 7, 3);
    let (m, rec) = latent_mask(&z, 0.5, 3, 42).unwrap();
    assert_eq!((rec.blocks_h, rec.blocks_w), (4, 3));
    for r in 0..10 {
        for c in 0..7 {
            let i = (r * 7 + c) * 3;
            let expect: &[f32] = if rec.is_kept(r / 3, c / 3) { &z.data()[i..i + 3] } else { &[0.0; 3] };
            assert_eq!(&m.data()[i..i + 3], expect);
        }
    }
    let blob = m.to_bytes();
    assert_eq!(&blob[..4], b"PBLT");
    assert_eq!(LatentGrid::from_bytes(&blob).unwrap(), m);
}

fn room() -> ElementSet {
    ElementSet::new(
        "Japandi",
        "living_room",
        vec![
            Element::new("Sofa", ["linen", "beige", "low-profile"]).unwrap(),
            Element::new("Table", ["oak", "round"]).unwrap(),
            Element::new("Cabinet", ["walnut"]).unwrap(),
            Element::new("Plants", ["monstera", "ceramic pot"]).unwrap(),
            Element::new("Decorative Items", ["brass", "vase", "matte"]).unwrap(),
            Element::new("Plants", ["fern"]).unwrap(),
        ],
    )
    .unwrap()
}

#[test]
fn furnishing_categories_always_survive() {
    let set = room();
    let cfg = MaskingConfig::default();
    let fur_attrs: usize = set.elements.iter().filter(|e| !e.is_decorative()).map(|e| e.attributes.len()).sum();
    let mut violations = 0;
    let mut masked_fur_attrs = 0;
    let mut masked_dec_cats = 0;
    let trials = 10_000;
    for seed in 0..trials {
        let m = mask_elements(&set, &cfg, seed).unwrap();
        for (orig, out) in set.elements.iter().zip(&m.elements) {
            match orig.kind {
                ElementKind::CoreFurnishing => {
                    if out.category_masked || out.category != orig.category {
                        violations += 1;
                    }
                    masked_fur_attrs += out.attribute_masked.iter().filter(|b| **b).count();
                }
                ElementKind::Decorative => {
                    if out.category_masked {
                        masked_dec_cats += 1;
                        assert!(out.attributes.iter().all(|a| a == MASK_TOKEN));
                    }
                }
            }
        }
    }
    assert_eq!(violations, 0);
    assert!(within_three_sigma(masked_fur_attrs, fur_attrs * trials as usize, cfg.p_attr_fur));
    assert!(within_three_sigma(masked_dec_cats, 3 * trials as usize, cfg.p_cat_dec));
}

#[test]
fn masking_is_seed_deterministic() {
    let set = room();
    let cfg = MaskingConfig::default();
    assert_eq!(mask_elements(&set, &cfg, 99).unwrap(), mask_elements(&set, &cfg, 99).unwrap());
    let differs = (0..20).any(|s| mask_elements(&set, &cfg, s).unwrap() != mask_elements(&set, &cfg, 99).unwrap());
    assert!(differs);
}

#[test]
fn transfer_lands_on_compatible_furniture() {
    let reference = ElementSet::new(
        "Scandinavian",
        "bedroom",
        vec![
            Element::new("Desk", ["walnut"]).unwrap(),
            Element::new("Plants", ["fern"]).unwrap(),
        ],
    )
    .unwrap();
    let place = ["Bed", "Wardrobe"];
    let out = transfer_attributes(&reference, &place, &Vocabulary::shipped()).unwrap();
    for e in out.elements.iter().filter(|e| !e.is_decorative()) {
        assert!(place.contains(&e.category.as_str()), "{} not in place", e.category);
    }
    let hosts: Vec<&Element> = out.elements.iter().filter(|e| e.attributes.iter().any(|a| a == "walnut")).collect();
    assert_eq!(hosts.len(), 1);
    assert_eq!(hosts[0].category, "Bed");
    assert!(out.elements.iter().any(|e| e.category == "Plants" && e.attributes == ["fern"]));
}
