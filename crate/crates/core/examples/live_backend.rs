//! One grounding query against a real OpenAI-compatible endpoint.
//!
//! DSG_BASE_URL=https://api.openai.com/v1 DSG_MODEL=gpt-4o OPENAI_API_KEY=... \
//!     cargo run --example live_backend -- path/to/image.png
//!
//! Replies are cached under ./dsg-cache, so a second run makes no request.

use std::sync::Arc;

use dsg::extraction::load_canonical_schema;
use dsg::gateway::{BackendHandle, HttpBackend, ImageRef, RequestDefaults, ResponseCache};
use dsg::grounding::ground_hierarchical;

fn main() {
    let Some(image_path) = std::env::args().nth(1) else {
        eprintln!("usage: live_backend <image>");
        std::process::exit(2);
    };
    let base_url = std::env::var("DSG_BASE_URL").unwrap_or_else(|_| "https://api.openai.com/v1".into());
    let model = std::env::var("DSG_MODEL").unwrap_or_else(|_| "gpt-4o".into());
    let key = std::env::var("OPENAI_API_KEY").ok();

    let backend = HttpBackend::new("live", base_url, key).unwrap();
    let cache = Arc::new(ResponseCache::open("dsg-cache").unwrap());
    let vlm = BackendHandle::new(backend)
        .with_cache(cache)
        .with_defaults(RequestDefaults {
            model_id: model,
            ..RequestDefaults::default()
        });
    let image = ImageRef::from_path(&image_path).unwrap_or_else(|e| {
        eprintln!("error[{}]: {e}", e.class_name());
        std::process::exit(1);
    });
    let maze = load_canonical_schema("maze").unwrap();
    match ground_hierarchical(&maze, &image, &vlm) {
        Ok(resolved) => println!("{}", resolved.to_json()),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class_name());
            std::process::exit(1);
        }
    }
}
