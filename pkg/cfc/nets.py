# -*- coding: utf-8 -*-
# =============================================================================
#     cfc
#     Copyright (C) 2026 The cfc developers
#
#     This program is free software: you can redistribute it and/or modify
#     it under the terms of the GNU General Public License as published by
#     the Free Software Foundation, either version 3 of the License, or
#     (at your option) any later version.
#
#     This program is distributed in the hope that it will be useful,
#     but WITHOUT ANY WARRANTY; without even the implied warranty of
#     MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
#     GNU General Public License for more details.
#
#     You should have received a copy of the GNU General Public License
#     along with this program. If not, see <http://www.gnu.org/licenses/>.
# =============================================================================
"""Learnable networks.

The generator chains three networks. The pose net, a U-Net, estimates the
UV field of the input image. The texture net encodes the input into a
compact identity representation and decodes it into a texture in the UV
atlas; its second last layer is a 32 channel feature texture and its last
layer the colour texture. Both textures are warped into the image through
the estimated field and the fusion net turns them into the output image,
background included.

The discriminators judge pairs of identity representations and the low and
high frequency wavelet bands of images. The embedder is the frozen
recognizer that provides the perceptual features and the recognition
features of the evaluation.

Every network is a ``torch.nn.Module`` whose sizes come from
:class:`cfc.config.RunConfig`.

Classes
-------
:class:`PoseNet`
    U-Net estimating UV fields.

:class:`TextureNet`
    Encoder-decoder of facial textures.

:class:`FusionNet`
    Convolutional fusion of warped textures.

:class:`Generator`
    The composition of the three.

:class:`PairDiscriminator`
    Discriminator of identity representation pairs.

:class:`BandDiscriminator`
    Strided convolutional discriminator of images or wavelet bands.

:class:`Discriminators`
    All discriminators of a configuration.

:class:`Embedder`
    Small recognizer.

:class:`SynthesisResult`
    Output of the generator.

:class:`Networks`
    Generator, discriminators and embedder.

Functions
---------
:func:`generator_forward`, :func:`fusion_forward`, :func:`embed`
    Functional entry points.

:func:`build_networks`
    Initializes the networks of a configuration.

:func:`pretrain_embedder`
    Trains the recognizer on an identity pool disjoint from the data.

:func:`embedder_separation_rate`
    Fraction of triples the recognizer orders correctly.

:func:`save_checkpoint`, :func:`load_checkpoint`
    Checkpoint IO.

"""

import logging
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from cfc import synthgen
from cfc.config import RunConfig
from cfc.util import images_to_tensor
from cfc.uvgeom import UVField, warp

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'cfc-checkpoint-1'

_SLOPE = .2


def _check_resolution(image: torch.Tensor, size: int, channels: int = 3):
    if image.dim() != 4 or tuple(image.shape[1:]) != (channels, size, size):
        raise ValueError(
            'Expected images of shape (B, {}, {}, {}), got {}.'.format(
                channels, size, size, tuple(image.shape)))


def _conv_block(in_channels: int, out_channels: int) -> nn.Module:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, 3, padding=1),
        nn.LeakyReLU(_SLOPE),
        nn.Conv2d(out_channels, out_channels, 3, padding=1),
        nn.LeakyReLU(_SLOPE))


def spectrum_indicator(spectra: Sequence[synthgen.Spectrum],
                       dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """1 for NIR and 0 for VIS samples. """
    return torch.tensor([1. if synthgen.Spectrum(spectrum)
                         is synthgen.Spectrum.NIR else 0.
                         for spectrum in spectra], dtype=dtype)


class PoseNet(nn.Module):
    """U-Net mapping an image to UV coordinates and facial mask logits.

    Parameters
    ----------
    image_size: int
        Side length of the square input.

    width: int
        Channels of the first level, doubled on every level.

    depth: int
        Number of down-sampling steps.

    """
    def __init__(self, image_size: int, width: int = 16, depth: int = 3):
        super().__init__()
        self.image_size = image_size
        channels = [width * 2 ** i for i in range(depth + 1)]
        self.stem = _conv_block(3, channels[0])
        self.down = nn.ModuleList(
            [_conv_block(channels[i], channels[i + 1]) for i in range(depth)])
        self.up = nn.ModuleList(
            [_conv_block(channels[i + 1] + channels[i], channels[i])
             for i in reversed(range(depth))])
        self.head = nn.Conv2d(channels[0], 3, 1)

    def forward(self, image: torch.Tensor) \
            -> Tuple[torch.Tensor, torch.Tensor]:
        """Returns coords of shape (B, H, W, 2) in [0, 1] and mask logits of
        shape (B, H, W). """
        _check_resolution(image, self.image_size)
        x = self.stem(image)
        skips = [x]
        for block in self.down:
            x = block(F.avg_pool2d(x, 2))
            skips.append(x)
        skips.pop()
        for block in self.up:
            x = F.interpolate(x, scale_factor=2, mode='nearest')
            x = block(torch.cat([x, skips.pop()], dim=1))
        out = self.head(x)
        coords = torch.sigmoid(out[:, :2]).permute(0, 2, 3, 1)
        return coords, out[:, 2]

    def uv_field(self, image: torch.Tensor) -> UVField:
        """The estimated field, valid where the mask probability exceeds
        0.5. """
        coords, mask_logits = self(image)
        return UVField(coords=coords, valid=mask_logits > 0)


class TextureNet(nn.Module):
    """Encoder-decoder from a face image to its textures in the UV atlas.

    The input carries a fourth channel holding the spectrum indicator.

    """
    def __init__(self, image_size: int, texture_size: int, width: int = 16,
                 depth: int = 3, rep_dim: int = 64,
                 feature_channels: int = 32):
        super().__init__()
        self.image_size = image_size
        self.texture_size = texture_size
        encoder, channels = [], 4
        for i in range(depth):
            encoder += [nn.Conv2d(channels, width * 2 ** i, 4, stride=2,
                                  padding=1),
                        nn.LeakyReLU(_SLOPE)]
            channels = width * 2 ** i
        self.encoder = nn.Sequential(*encoder, nn.AdaptiveAvgPool2d(4),
                                     nn.Flatten())
        self.bottleneck = nn.Linear(16 * channels, rep_dim)

        self.seed_channels = channels
        self.seed_size = texture_size // 2 ** depth
        self.project = nn.Linear(rep_dim, channels * self.seed_size ** 2)
        decoder = []
        for i in reversed(range(depth)):
            out_channels = width * 2 ** max(i - 1, 0)
            decoder += [nn.Upsample(scale_factor=2, mode='nearest'),
                        nn.Conv2d(channels, out_channels, 3, padding=1),
                        nn.LeakyReLU(_SLOPE)]
            channels = out_channels
        self.decoder = nn.Sequential(*decoder)
        self.features = nn.Sequential(
            nn.Conv2d(channels, feature_channels, 3, padding=1),
            nn.LeakyReLU(_SLOPE))
        self.to_colour = nn.Conv2d(feature_channels, 3, 1)

    def forward(self, image: torch.Tensor, spectrum: torch.Tensor) \
            -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns the representation (B, rep_dim), the feature texture
        (B, 32, H_t, W_t) and the colour texture (B, 3, H_t, W_t). """
        _check_resolution(image, self.image_size)
        indicator = spectrum.to(image.dtype).view(-1, 1, 1, 1).expand(
            -1, 1, self.image_size, self.image_size)
        rep = self.bottleneck(self.encoder(torch.cat([image, indicator],
                                                     dim=1)))
        x = F.leaky_relu(self.project(rep), _SLOPE).view(
            -1, self.seed_channels, self.seed_size, self.seed_size)
        features = self.features(self.decoder(x))
        return rep, features, torch.sigmoid(self.to_colour(features))


class FusionNet(nn.Module):
    """Dilated convolutions from warped textures to the output image.

    The output blends the warped colour texture into the facial region
    through a learned gate and fills the rest with synthesized content.

    """
    def __init__(self, feature_channels: int = 32, width: int = 32,
                 layers: int = 4):
        super().__init__()
        body, channels = [], feature_channels + 4
        for i in range(layers):
            dilation = 2 ** min(i, 3)
            body += [nn.Conv2d(channels, width, 3, padding=dilation,
                               dilation=dilation),
                     nn.LeakyReLU(_SLOPE)]
            channels = width
        self.body = nn.Sequential(*body)
        self.head = nn.Conv2d(channels, 4, 3, padding=1)

    def forward(self, warped_features: torch.Tensor,
                warped_colour: torch.Tensor,
                warped_valid: torch.Tensor) -> torch.Tensor:
        out = self.head(self.body(torch.cat(
            [warped_features, warped_colour, warped_valid], dim=1)))
        rgb = torch.sigmoid(out[:, :3])
        gate = torch.sigmoid(out[:, 3:]) * warped_valid
        return gate * warped_colour + (1 - gate) * rgb


class SynthesisResult(NamedTuple):
    """Output of the generator.

    Attributes
    ----------
    output_image: torch.Tensor, shape (B, 3, H, W)
        Synthesized VIS image in [0, 1].

    predicted_uv: UVField
        Estimated field with coords (B, H, W, 2) and a boolean mask.

    texture_map: torch.Tensor, shape (B, 32, H_t, W_t)
        Feature texture.

    identity_rep: torch.Tensor, shape (B, rep_dim)
        Bottleneck of the texture net.

    color_texture: torch.Tensor, shape (B, 3, H_t, W_t)

    mask_logits: torch.Tensor, shape (B, H, W)

    """
    output_image: torch.Tensor
    predicted_uv: UVField
    texture_map: torch.Tensor
    identity_rep: torch.Tensor
    color_texture: torch.Tensor
    mask_logits: torch.Tensor


class Generator(nn.Module):
    """Pose net, texture net and fusion net of a configuration. """

    def __init__(self, config: RunConfig):
        super().__init__()
        self.image_size = config.image_size
        self.pose_net = PoseNet(config.image_size, config.pose_width,
                                config.pose_depth)
        self.texture_net = TextureNet(
            config.image_size, config.texture_size, config.texture_width,
            config.texture_depth, config.rep_dim, config.feature_channels)
        self.fusion_net = FusionNet(config.feature_channels,
                                    config.fusion_width, config.fusion_layers)

    def forward(self, image: torch.Tensor,
                spectrum: Optional[torch.Tensor] = None) -> SynthesisResult:
        _check_resolution(image, self.image_size)
        if spectrum is None:
            spectrum = torch.ones(image.shape[0], dtype=image.dtype)
        coords, mask_logits = self.pose_net(image)
        field = UVField(coords=coords, valid=mask_logits > 0)
        rep, features, colour = self.texture_net(image, spectrum)
        output = fusion_forward(self.fusion_net, features, field, colour)
        return SynthesisResult(output_image=output, predicted_uv=field,
                               texture_map=features, identity_rep=rep,
                               color_texture=colour, mask_logits=mask_logits)


def fusion_forward(fusion_net: FusionNet, features: torch.Tensor,
                   field: UVField,
                   colour: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Warps the textures through the field and fuses them into an image.

    Parameters
    ----------
    fusion_net: FusionNet

    features: torch.Tensor, shape (B, 32, H_t, W_t)
        Feature texture.

    field: UVField
        Tensor field of the output size.

    colour: torch.Tensor, shape (B, 3, H_t, W_t), optional
        Colour texture. Zero if omitted.

    Returns
    -------
    image: torch.Tensor, shape (B, 3, H, W)

    """
    warped_features, valid = warp(features, field)
    if colour is None:
        warped_colour = torch.zeros_like(warped_features[:, :3])
    else:
        warped_colour, _ = warp(colour, field)
    return fusion_net(warped_features, warped_colour, valid)


def generator_forward(generator: Generator, image: torch.Tensor,
                      spectrum: Optional[torch.Tensor] = None) \
        -> SynthesisResult:
    """Runs the generator. Inputs default to the NIR spectrum. """
    return generator(image, spectrum)


class PairDiscriminator(nn.Module):
    """MLP on the concatenation (candidate, anchor) of two representations.

    The pair order matters, the anchor is a real VIS representation.

    """
    def __init__(self, rep_dim: int = 64, hidden: int = 64):
        super().__init__()
        self.rep_dim = rep_dim
        self.body = nn.Sequential(
            nn.Linear(2 * rep_dim, hidden), nn.LeakyReLU(_SLOPE),
            nn.Linear(hidden, hidden), nn.LeakyReLU(_SLOPE),
            nn.Linear(hidden, 1))

    def forward(self, candidate: torch.Tensor,
                anchor: torch.Tensor) -> torch.Tensor:
        if candidate.shape[-1] != self.rep_dim \
                or anchor.shape[-1] != self.rep_dim:
            raise ValueError('Representations must have length {}, got {} '
                             'and {}.'.format(self.rep_dim,
                                              candidate.shape[-1],
                                              anchor.shape[-1]))
        logits = self.body(torch.cat([candidate, anchor], dim=-1))
        return torch.sigmoid(logits).squeeze(-1)


class BandDiscriminator(nn.Module):
    """Strided convolutions judging images or wavelet bands.

    Parameters
    ----------
    in_channels: int
        3 for images and the low band, 9 for the high bands.

    size: int
        Side length of the input.

    """
    def __init__(self, in_channels: int, size: int, width: int = 16,
                 depth: int = 3):
        super().__init__()
        self.in_channels = in_channels
        self.size = size
        layers, channels = [], in_channels
        for i in range(depth):
            layers += [nn.Conv2d(channels, width * 2 ** i, 4, stride=2,
                                 padding=1),
                       nn.LeakyReLU(_SLOPE)]
            channels = width * 2 ** i
        self.body = nn.Sequential(*layers, nn.AdaptiveAvgPool2d(1),
                                  nn.Flatten(), nn.Linear(channels, 1))

    def forward(self, band: torch.Tensor) -> torch.Tensor:
        _check_resolution(band, self.size, self.in_channels)
        return torch.sigmoid(self.body(band)).squeeze(-1)


class Discriminators(nn.Module):
    """The discriminators of a configuration.

    ``pair`` always exists. Depending on ``image_adversary`` there are
    ``low`` and ``high`` band discriminators ('multiscale'), a single
    ``image`` discriminator ('single') or none ('none').

    """
    def __init__(self, config: RunConfig):
        super().__init__()
        self.image_adversary = config.image_adversary
        self.pair = PairDiscriminator(config.rep_dim, config.pair_hidden)
        half = config.image_size // 2
        if self.image_adversary == 'multiscale':
            self.low = BandDiscriminator(3, half, config.disc_width,
                                         config.disc_depth)
            self.high = BandDiscriminator(9, half, config.disc_width,
                                          config.disc_depth)
        elif self.image_adversary == 'single':
            self.image = BandDiscriminator(3, config.image_size,
                                           config.disc_width,
                                           config.disc_depth)


class Embedder(nn.Module):
    """Convolutional identity classifier.

    The embedding is the last hidden layer, the pooled convolutional
    features are the intermediate alternative.

    """
    def __init__(self, image_size: int, width: int = 16, embed_dim: int = 64,
                 n_classes: int = 40):
        super().__init__()
        self.image_size = image_size
        self.convs = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1), nn.LeakyReLU(_SLOPE),
            nn.Conv2d(width, width, 4, stride=2, padding=1),
            nn.LeakyReLU(_SLOPE),
            nn.Conv2d(width, 2 * width, 4, stride=2, padding=1),
            nn.LeakyReLU(_SLOPE),
            nn.Conv2d(2 * width, 4 * width, 4, stride=2, padding=1),
            nn.LeakyReLU(_SLOPE))
        self.pool = nn.Sequential(nn.AdaptiveAvgPool2d(4), nn.Flatten())
        self.embedding = nn.Linear(64 * width, embed_dim)
        self.classifier = nn.Linear(embed_dim, n_classes)

    def features(self, image: torch.Tensor) -> torch.Tensor:
        _check_resolution(image, self.image_size)
        return self.pool(self.convs(image))

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.embedding(self.features(image))

    def logits(self, image: torch.Tensor) -> torch.Tensor:
        return self.classifier(self(image))


def embed(embedder: Embedder, image: torch.Tensor) -> torch.Tensor:
    """Identity representation of a batch of images.

    Raises
    ------
    ValueError
        If the images do not have the embedder's resolution.

    """
    return embedder(image)


def freeze(module: nn.Module) -> nn.Module:
    """Switches a module to inference and disables its gradients. """
    module.eval()
    for parameter in module.parameters():
        parameter.requires_grad_(False)
    return module


class Networks(NamedTuple):
    generator: Generator
    discriminators: Discriminators
    embedder: Embedder


def build_embedder(config: RunConfig) -> Embedder:
    return Embedder(config.image_size, config.embed_width, config.embed_dim,
                    config.embedder_identities)


def build_networks(config: RunConfig, seed: int,
                   embedder: Optional[Embedder] = None) -> Networks:
    """Initializes generator and discriminators from seed.

    Parameters
    ----------
    config: RunConfig

    seed: int
        Seed of the torch generator used for the initialization.

    embedder: Embedder, optional
        A pretrained recognizer. A fresh untrained one is used if omitted.

    """
    torch.manual_seed(seed)
    generator = Generator(config)
    discriminators = Discriminators(config)
    if embedder is None:
        embedder = build_embedder(config)
    return Networks(generator, discriminators, freeze(embedder))


def pretrain_embedder(config: RunConfig, seed: Optional[int] = None,
                      batch_size: int = 32) -> Embedder:
    """Trains the recognizer on a VIS identity pool disjoint from the data.

    The pool is :func:`cfc.synthgen.make_vis_pool`. The classifier is
    trained with cross entropy and Adam and returned frozen.

    """
    seed = config.seed if seed is None else seed
    samples = synthgen.make_vis_pool(config, seed)
    images = images_to_tensor([sample.image for sample in samples])
    classes = {id: n for n, id in enumerate(
        sorted({sample.identity for sample in samples}))}
    labels = torch.tensor([classes[sample.identity] for sample in samples])

    torch.manual_seed(seed)
    embedder = build_embedder(config)
    optimizer = torch.optim.Adam(embedder.parameters(), lr=config.embedder_lr)
    rng = np.random.default_rng(seed)
    embedder.train()
    for step in range(config.embedder_steps):
        batch = rng.choice(len(samples), size=min(batch_size, len(samples)),
                           replace=False)
        loss = F.cross_entropy(embedder.logits(images[batch]), labels[batch])
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        if step % 50 == 0:
            logger.debug('embedder step %d: cross entropy %.4f', step,
                         loss.item())
    logger.info('Pretrained the embedder on %d identities for %d steps.',
                len(classes), config.embedder_steps)
    return freeze(embedder)


def embedder_separation_rate(embedder: Embedder,
                             samples: Sequence[synthgen.FaceSample],
                             n_triples: int = 1000, seed: int = 0) -> float:
    """Fraction of triples whose same-identity pair is more similar.

    A triple is an anchor, another sample of its identity and a sample of a
    different identity. Similarity is the cosine of the embeddings.

    Raises
    ------
    ValueError
        If fewer than two identities have two samples.

    """
    with torch.no_grad():
        embeddings = F.normalize(embed(embedder, images_to_tensor(
            [sample.image for sample in samples])), dim=1).numpy()
    by_identity: Dict[int, List[int]] = {}
    for n, sample in enumerate(samples):
        by_identity.setdefault(sample.identity, []).append(n)
    anchors = [id for id, members in by_identity.items() if len(members) > 1]
    if len(anchors) < 1 or len(by_identity) < 2:
        raise ValueError('Need an identity with two samples and a second '
                         'identity.')
    rng = np.random.default_rng(seed)
    ids = sorted(by_identity)
    correct = 0
    for _ in range(n_triples):
        id = anchors[rng.integers(len(anchors))]
        anchor, positive = rng.choice(by_identity[id], size=2, replace=False)
        other = ids[rng.integers(len(ids) - 1)]
        other = ids[-1] if other == id else other
        negative = by_identity[other][rng.integers(len(by_identity[other]))]
        correct += (embeddings[anchor] @ embeddings[positive]
                    > embeddings[anchor] @ embeddings[negative])
    return correct / n_triples


def save_checkpoint(path: str, networks: Networks, config: RunConfig,
                    training_state: Optional[Dict[str, Any]] = None):
    """Writes networks, architecture, configuration and training state.

    The file is a ``torch.save`` dictionary with the keys 'format',
    'architecture', 'config_text', 'config_hash', 'generator',
    'discriminators', 'embedder' and 'training_state'.

    """
    torch.save({
        'format': CHECKPOINT_FORMAT,
        'architecture': config.architecture,
        'config_text': config.to_text(),
        'config_hash': config.content_hash(),
        'generator': networks.generator.state_dict(),
        'discriminators': networks.discriminators.state_dict(),
        'embedder': networks.embedder.state_dict(),
        'training_state': training_state,
    }, path)


class Checkpoint(NamedTuple):
    config: RunConfig
    networks: Networks
    training_state: Optional[Dict[str, Any]]


def load_checkpoint(path: str) -> Checkpoint:
    """Restores a checkpoint written by :func:`save_checkpoint`.

    Raises
    ------
    ValueError
        For files of another format or a configuration whose hash or
        architecture does not match the stored one.

    """
    data = torch.load(path, map_location='cpu', weights_only=False)
    if not isinstance(data, dict) or data.get('format') != CHECKPOINT_FORMAT:
        raise ValueError('{}: not a cfc checkpoint.'.format(path))
    config = RunConfig.from_text(data['config_text'])
    if config.content_hash() != data['config_hash']:
        raise ValueError('{}: configuration hash mismatch.'.format(path))
    if config.architecture != data['architecture']:
        raise ValueError('{}: architecture mismatch.'.format(path))
    generator = Generator(config)
    generator.load_state_dict(data['generator'])
    discriminators = Discriminators(config)
    discriminators.load_state_dict(data['discriminators'])
    embedder = build_embedder(config)
    embedder.load_state_dict(data['embedder'])
    return Checkpoint(config=config,
                      networks=Networks(generator, discriminators,
                                        freeze(embedder)),
                      training_state=data['training_state'])
