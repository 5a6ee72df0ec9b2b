//! Hierarchical and sequential grounding of the maze schema on one image.

use dsg::extraction::load_canonical_schema;
use dsg::gateway::{BackendHandle, ImageRef, MediaType, ScriptedBackend};
use dsg::grounding::{ground, GroundingConfig, GroundingStrategy};

fn main() {
    let maze = load_canonical_schema("maze").unwrap();
    let image = ImageRef::inline(b"stand-in for a photo of a coffee-bean maze".to_vec(), MediaType::Png);
    let vlm = BackendHandle::new(ScriptedBackend::from_pairs(
        "vlm",
        [
            ("What is the layout?", "rectangular"),
            ("What is the walls?", "coffee beans"),
            ("What is the entry-exit?", "coffee cups"),
        ],
    ));
    for strategy in [GroundingStrategy::Hierarchical, GroundingStrategy::Sequential] {
        let resolved = ground(&maze, &image, &vlm, strategy, &GroundingConfig::default()).unwrap();
        println!("== {strategy:?}");
        for b in &resolved.bindings {
            println!(
                "  {:<11} {:<13} <- {}",
                b.component.as_str(),
                b.description,
                b.query_text
            );
        }
    }
    let resolved = ground(
        &maze,
        &image,
        &vlm,
        GroundingStrategy::Hierarchical,
        &GroundingConfig::default(),
    )
    .unwrap();
    println!("\n{}", resolved.to_json());
}
