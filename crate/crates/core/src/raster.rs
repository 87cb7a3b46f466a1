//! Raster containers for label and cost images, PNG I/O, and cropping.

use std::path::Path;

use image::{ColorType, GrayImage, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Class id written wherever a destination pixel has no observed source.
pub const OUT_OF_VIEW_CLASS: u8 = 255;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("failed to read image {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("failed to write image {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: expected a single-channel 8-bit label image, found {found:?}")]
    NotLabelImage { path: String, found: ColorType },
    #[error("{path}: expected an 8-bit RGB image, found {found:?}")]
    NotColorImage { path: String, found: ColorType },
    #[error("data length {len} does not match {width}x{height}")]
    DataLength { width: u32, height: u32, len: usize },
    #[error("crop rectangle {rect:?} does not fit inside a {width}x{height} image")]
    CropOutOfBounds {
        rect: CropRect,
        width: u32,
        height: u32,
    },
    #[error("cost value {value} at index {index} is not finite and nonnegative")]
    InvalidCost { index: usize, value: f64 },
}

/// Row-major class-indexed raster, one class id per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        if data.len() != width as usize * height as usize {
            return Err(RasterError::DataLength {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, class: u8) -> Self {
        Self {
            width,
            height,
            data: vec![class; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, class: u8) {
        self.data[y as usize * self.width as usize + x as usize] = class;
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_gray_image(self) -> GrayImage {
        GrayImage::from_raw(self.width, self.height, self.data)
            .expect("length checked at construction")
    }

    pub fn from_gray_image(img: GrayImage) -> Self {
        let (width, height) = img.dimensions();
        Self {
            width,
            height,
            data: img.into_raw(),
        }
    }
}

/// Which plane a cost raster lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Perspective,
    Bev,
}

/// Row-major per-pixel traversal costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    width: u32,
    height: u32,
    data: Vec<f64>,
    space: Space,
}

impl CostMap {
    pub fn new(width: u32, height: u32, data: Vec<f64>, space: Space) -> Result<Self, RasterError> {
        if data.len() != width as usize * height as usize {
            return Err(RasterError::DataLength {
                width,
                height,
                len: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(RasterError::InvalidCost { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
            space,
        })
    }

    /// Skips validation; callers guarantee finite nonnegative values.
    pub(crate) fn from_parts(width: u32, height: u32, data: Vec<f64>, space: Space) -> Self {
        debug_assert_eq!(data.len(), width as usize * height as usize);
        Self {
            width,
            height,
            data,
            space,
        }
    }

    pub fn filled(width: u32, height: u32, cost: f64, space: Space) -> Self {
        Self::from_parts(
            width,
            height,
            vec![cost; width as usize * height as usize],
            space,
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn with_space(mut self, space: Space) -> Self {
        self.space = space;
        self
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl CropRect {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        (self.x as u64 + self.width as u64) <= width as u64
            && (self.y as u64 + self.height as u64) <= height as u64
    }
}

pub fn crop(image: &LabelImage, rect: CropRect) -> Result<LabelImage, RasterError> {
    if !rect.fits(image.width, image.height) {
        return Err(RasterError::CropOutOfBounds {
            rect,
            width: image.width,
            height: image.height,
        });
    }
    let src_w = image.width as usize;
    let mut data = Vec::with_capacity(rect.width as usize * rect.height as usize);
    for y in rect.y..rect.y + rect.height {
        let start = y as usize * src_w + rect.x as usize;
        data.extend_from_slice(&image.data[start..start + rect.width as usize]);
    }
    Ok(LabelImage {
        width: rect.width,
        height: rect.height,
        data,
    })
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Reads a single-channel 8-bit PNG. Any other pixel layout is rejected.
pub fn load_label_image(path: impl AsRef<Path>) -> Result<LabelImage, RasterError> {
    let path = path.as_ref();
    let img = ImageReader::open(path)
        .map_err(|e| RasterError::Read {
            path: display(path),
            source: image::ImageError::IoError(e),
        })?
        .decode()
        .map_err(|source| RasterError::Read {
            path: display(path),
            source,
        })?;
    match img {
        image::DynamicImage::ImageLuma8(gray) => Ok(LabelImage::from_gray_image(gray)),
        other => Err(RasterError::NotLabelImage {
            path: display(path),
            found: other.color(),
        }),
    }
}

pub fn save_label_image(image: &LabelImage, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    image
        .clone()
        .into_gray_image()
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| RasterError::Write {
            path: display(path),
            source,
        })
}

/// Reads an 8-bit RGB frame. Only used for overlay rendering.
pub fn load_color_image(path: impl AsRef<Path>) -> Result<RgbImage, RasterError> {
    let path = path.as_ref();
    let img = ImageReader::open(path)
        .map_err(|e| RasterError::Read {
            path: display(path),
            source: image::ImageError::IoError(e),
        })?
        .decode()
        .map_err(|source| RasterError::Read {
            path: display(path),
            source,
        })?;
    match img {
        image::DynamicImage::ImageRgb8(rgb) => Ok(rgb),
        other => Err(RasterError::NotColorImage {
            path: display(path),
            found: other.color(),
        }),
    }
}

pub fn save_color_image(image: &RgbImage, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    image
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| RasterError::Write {
            path: display(path),
            source,
        })
}
