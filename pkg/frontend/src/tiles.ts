/**
 * Sliding-window tiling of a grayscale image for batched embedding.
 */

import type { GrayImage } from './image.js'

export interface TileGrid {
  patch: number
  stride: number
  rows: number
  cols: number
}

export function tileGrid(
  height: number,
  width: number,
  patch: number,
  stride: number,
): TileGrid {
  if (!Number.isInteger(patch) || !Number.isInteger(stride)) {
    throw new Error(`patch and stride must be integers, got ${patch}, ${stride}`)
  }
  if (stride < 1 || patch < stride) {
    throw new Error(`need patch >= stride >= 1, got patch=${patch} stride=${stride}`)
  }
  if (height < patch || width < patch) {
    throw new Error(
      `image ${height}x${width} is smaller than the ${patch}px patch`,
    )
  }
  return {
    patch,
    stride,
    rows: Math.floor((height - patch) / stride) + 1,
    cols: Math.floor((width - patch) / stride) + 1,
  }
}

/**
 * Copy one patch into a [patch, patch, 3] float buffer, replicating the
 * grayscale value across the three channels the backbone expects.
 */
export function fillTileRgb(
  img: GrayImage,
  row: number,
  col: number,
  grid: TileGrid,
  out: Float32Array,
): void {
  const y0 = row * grid.stride
  const x0 = col * grid.stride
  let o = 0
  for (let y = 0; y < grid.patch; y++) {
    const base = (y0 + y) * img.width + x0
    for (let x = 0; x < grid.patch; x++) {
      const v = img.pixels[base + x]
      out[o++] = v
      out[o++] = v
      out[o++] = v
    }
  }
}
