//! Image preprocessing expected by CLIP-family vision encoders.

use image::imageops::{self, FilterType};
use image::{DynamicImage, Rgb32FImage};

use super::{ClassifierError, ImageRef};

pub const INPUT_SIZE: u32 = 224;

/// Per-channel mean of the reference CLIP preprocessing.
pub const CLIP_MEAN: [f32; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
/// Per-channel standard deviation of the reference CLIP preprocessing.
pub const CLIP_STD: [f32; 3] = [0.268_629_54, 0.261_302_58, 0.275_777_11];

/// Normalized image in channel-major (CHW) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelTensor {
    pub data: Vec<f32>,
    pub height: usize,
    pub width: usize,
}

impl PixelTensor {
    pub fn shape(&self) -> [usize; 3] {
        [3, self.height, self.width]
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.data[(channel * self.height + y) * self.width + x]
    }
}

/// Decode an image file and preprocess it.
pub fn preprocess_image(image: &ImageRef) -> Result<PixelTensor, ClassifierError> {
    let decode_err = |reason: String| ClassifierError::Decode {
        image_ref: image.to_string(),
        reason,
    };
    let img = image::ImageReader::open(image.as_path())
        .map_err(|e| decode_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?;
    preprocess_rgb(&img).map_err(|e| match e {
        ClassifierError::Decode { reason, .. } => decode_err(reason),
        other => other,
    })
}

/// Resize the shorter side to 224 with bicubic filtering, center-crop to
/// 224×224, scale to [0, 1] and normalize each channel.
pub fn preprocess_rgb(img: &DynamicImage) -> Result<PixelTensor, ClassifierError> {
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return Err(ClassifierError::Decode {
            image_ref: "<memory>".into(),
            reason: format!("zero-sized image {w}x{h}"),
        });
    }
    let rgb: Rgb32FImage = img.to_rgb32f();
    let (rw, rh) = resized_dims(w, h);
    let resized = if (rw, rh) == (w, h) {
        rgb
    } else {
        imageops::resize(&rgb, rw, rh, FilterType::CatmullRom)
    };

    let size = INPUT_SIZE as usize;
    let left = crop_offset(rw);
    let top = crop_offset(rh);
    let mut data = vec![0.0f32; 3 * size * size];
    for (c, plane) in data.chunks_exact_mut(size * size).enumerate() {
        for y in 0..size {
            for x in 0..size {
                let px = resized.get_pixel(left + x as u32, top + y as u32);
                plane[y * size + x] = (px[c] - CLIP_MEAN[c]) / CLIP_STD[c];
            }
        }
    }
    Ok(PixelTensor { data, height: size, width: size })
}

fn resized_dims(w: u32, h: u32) -> (u32, u32) {
    let long_side = |long: u32, short: u32| {
        (u64::from(INPUT_SIZE) * u64::from(long) / u64::from(short)) as u32
    };
    if w <= h {
        (INPUT_SIZE, long_side(h, w))
    } else {
        (long_side(w, h), INPUT_SIZE)
    }
}

fn crop_offset(len: u32) -> u32 {
    (f64::from(len - INPUT_SIZE) / 2.0).round_ties_even() as u32
}
