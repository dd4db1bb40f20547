//! Raster representation, far-region cropping and patch-grid extraction.
//!
//! Camera frames are 8-bit interleaved RGB, row-major. A frame is first
//! cropped to drop the low-resolution far region at the top, then cut into a
//! fixed grid of patches (four rows by five columns of 128x256 by default).
//! All operations here are pure geometry; pixel values are never rewritten.

use std::path::Path;

use crate::error::{Error, Result};

/// Owned H x W x 3 pixel raster, 8-bit channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// Channels per pixel. Frames and patches are always RGB.
pub const CHANNELS: usize = 3;

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * CHANNELS;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "buffer holds {} bytes, {width}x{height} RGB needs {expected}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Solid-color raster.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize * CHANNELS);
        for _ in 0..(width as usize * height as usize) {
            data.extend_from_slice(&rgb);
        }
        Self::new(width, height, data)
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

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * CHANNELS
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    /// Copy out the rectangle with top-left corner `(x, y)`.
    pub fn sub_image(&self, x: u32, y: u32, width: u32, height: u32) -> Result<Self> {
        if x + width > self.width || y + height > self.height {
            return Err(Error::DimensionMismatch(format!(
                "sub-image {width}x{height} at ({x},{y}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width as usize * height as usize * CHANNELS);
        for row in y..y + height {
            let start = self.offset(x, row);
            data.extend_from_slice(&self.data[start..start + width as usize * CHANNELS]);
        }
        Self::new(width, height, data)
    }

    /// Paste `src` with its top-left corner at `(x, y)`.
    pub fn blit(&mut self, src: &ImageBuffer, x: u32, y: u32) -> Result<()> {
        if x + src.width > self.width || y + src.height > self.height {
            return Err(Error::DimensionMismatch(format!(
                "blit of {}x{} at ({x},{y}) exceeds {}x{}",
                src.width, src.height, self.width, self.height
            )));
        }
        for row in 0..src.height {
            let dst_start = self.offset(x, y + row);
            let src_start = src.offset(0, row);
            let len = src.width as usize * CHANNELS;
            self.data[dst_start..dst_start + len]
                .copy_from_slice(&src.data[src_start..src_start + len]);
        }
        Ok(())
    }

    /// Mean intensity per channel, in [0, 255].
    pub fn channel_means(&self) -> [f64; 3] {
        let mut sums = [0.0f64; 3];
        for px in self.data.chunks_exact(CHANNELS) {
            sums[0] += px[0] as f64;
            sums[1] += px[1] as f64;
            sums[2] += px[2] as f64;
        }
        let n = (self.width as usize * self.height as usize) as f64;
        [sums[0] / n, sums[1] / n, sums[2] / n]
    }

    /// Decode an 8-bit RGB PNG. Other color types are converted to RGB8.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_rgb8();
        let (width, height) = img.dimensions();
        Self::new(width, height, img.into_raw())
    }

    /// Encode as PNG. Round-trips through `load_png` bit-exactly.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img: image::RgbImage =
            image::ImageBuffer::from_raw(self.width, self.height, self.data.clone())
                .expect("buffer length is validated at construction");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Geometry of the fixed patch grid for one camera.
///
/// `crop_top` rows are removed from the top of the frame; the remainder must
/// tile exactly into `rows x cols` patches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGridSpec {
    pub rows: u32,
    pub cols: u32,
    pub patch_height: u32,
    pub patch_width: u32,
    pub crop_top: u32,
}

impl Default for PatchGridSpec {
    /// The production camera geometry: 1280x720 frames, 4x5 grid of 128x256
    /// patches, which forces a 208-row far-region crop.
    fn default() -> Self {
        Self { rows: 4, cols: 5, patch_height: 128, patch_width: 256, crop_top: 208 }
    }
}

impl PatchGridSpec {
    pub fn new(rows: u32, cols: u32, patch_height: u32, patch_width: u32, crop_top: u32) -> Result<Self> {
        if rows == 0 || cols == 0 || patch_height == 0 || patch_width == 0 {
            return Err(Error::InvalidParam(
                "grid rows/cols and patch dimensions must be at least 1".into(),
            ));
        }
        Ok(Self { rows, cols, patch_height, patch_width, crop_top })
    }

    /// Crop offset that makes a frame of the given height tile exactly.
    pub fn derive_crop_top(&self, frame_height: u32) -> Result<u32> {
        let grid_h = self.rows * self.patch_height;
        if frame_height <= grid_h {
            return Err(Error::DimensionMismatch(format!(
                "frame height {frame_height} does not exceed grid height {grid_h}"
            )));
        }
        Ok(frame_height - grid_h)
    }

    /// Same geometry with `crop_top` rederived for `frame_height`.
    pub fn for_frame_height(&self, frame_height: u32) -> Result<Self> {
        let mut spec = self.clone();
        spec.crop_top = if frame_height == self.rows * self.patch_height {
            0
        } else {
            self.derive_crop_top(frame_height)?
        };
        Ok(spec)
    }

    /// Height of the cropped region: `rows * patch_height`.
    pub fn cropped_height(&self) -> u32 {
        self.rows * self.patch_height
    }

    /// Width of the cropped region: `cols * patch_width`.
    pub fn cropped_width(&self) -> u32 {
        self.cols * self.patch_width
    }

    /// Frame height this spec expects: `cropped_height + crop_top`.
    pub fn frame_height(&self) -> u32 {
        self.cropped_height() + self.crop_top
    }

    pub fn patch_count(&self) -> usize {
        self.rows as usize * self.cols as usize
    }
}

/// One cell of the patch grid together with its grid position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub pixels: ImageBuffer,
    pub grid_row: u32,
    pub grid_col: u32,
}

/// Remove the far region: drop the top `crop_top` rows of the frame.
///
/// The remaining rows are preserved bit-exactly. The frame must match the
/// spec geometry so that the result tiles into the patch grid.
pub fn crop_far_region(frame: &ImageBuffer, spec: &PatchGridSpec) -> Result<ImageBuffer> {
    if frame.width() != spec.cropped_width() {
        return Err(Error::DimensionMismatch(format!(
            "frame width {} != grid width {}",
            frame.width(),
            spec.cropped_width()
        )));
    }
    if frame.height() <= spec.crop_top {
        return Err(Error::DimensionMismatch(format!(
            "frame height {} does not exceed crop_top {}",
            frame.height(),
            spec.crop_top
        )));
    }
    let remaining = frame.height() - spec.crop_top;
    if remaining != spec.cropped_height() {
        return Err(Error::DimensionMismatch(format!(
            "frame height {} minus crop_top {} leaves {remaining} rows, grid needs {}",
            frame.height(),
            spec.crop_top,
            spec.cropped_height()
        )));
    }
    frame.sub_image(0, spec.crop_top, frame.width(), remaining)
}

/// Cut the cropped frame into `rows x cols` patches in row-major order.
///
/// Patch `(r, c)` is the sub-rectangle at `(r * patch_height, c * patch_width)`
/// and sits at index `r * cols + c` of the returned vector.
pub fn extract_patches(cropped: &ImageBuffer, spec: &PatchGridSpec) -> Result<Vec<Patch>> {
    if cropped.height() != spec.cropped_height() || cropped.width() != spec.cropped_width() {
        return Err(Error::DimensionMismatch(format!(
            "cropped frame is {}x{}, grid needs {}x{}",
            cropped.width(),
            cropped.height(),
            spec.cropped_width(),
            spec.cropped_height()
        )));
    }
    let mut patches = Vec::with_capacity(spec.patch_count());
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let pixels = cropped.sub_image(
                c * spec.patch_width,
                r * spec.patch_height,
                spec.patch_width,
                spec.patch_height,
            )?;
            patches.push(Patch { pixels, grid_row: r, grid_col: c });
        }
    }
    Ok(patches)
}
