use super::{Latent, SyncError};
use crate::imageops::{ColorSpace, ImagePlane};

/// Maps linear images to and from the denoiser's latent space.
pub trait LatentCodec: Send + Sync {
    /// Latent shape for an image of the given size.
    fn latent_shape(&self, width: usize, height: usize) -> Vec<usize>;
    fn encode(&self, img: &ImagePlane) -> Result<Latent, SyncError>;
    fn decode(&self, z: &Latent) -> Result<ImagePlane, SyncError>;
}

/// Latent = pixel array, shape `[height, width, 3]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCodec;

impl LatentCodec for IdentityCodec {
    fn latent_shape(&self, width: usize, height: usize) -> Vec<usize> {
        vec![height, width, 3]
    }

    fn encode(&self, img: &ImagePlane) -> Result<Latent, SyncError> {
        img.require_space(ColorSpace::Linear)?;
        Latent::new(self.latent_shape(img.width(), img.height()), img.data().to_vec())
    }

    fn decode(&self, z: &Latent) -> Result<ImagePlane, SyncError> {
        match *z.shape() {
            [h, w, 3] => Ok(ImagePlane::new(w, h, ColorSpace::Linear, z.data().to_vec())?),
            _ => Err(SyncError::Shape(z.shape().to_vec(), vec![0, 0, 3])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_round_trip() {
        let img = ImagePlane::from_fn(3, 2, ColorSpace::Linear, |x, y| [x as f64, y as f64, -0.5]);
        let z = IdentityCodec.encode(&img).unwrap();
        assert_eq!(z.shape(), &[2, 3, 3]);
        assert_eq!(IdentityCodec.decode(&z).unwrap(), img);
        assert!(IdentityCodec.decode(&Latent::zeros(vec![6])).is_err());
    }
}
