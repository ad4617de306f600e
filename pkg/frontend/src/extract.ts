/**
 * Tile-embedding extraction: image -> sliding tiles -> backbone -> SFT file.
 */

import { writeFileSync } from 'node:fs'
import * as tf from '@tensorflow/tfjs'
import { loadGrayImage } from './image.js'
import { DEFAULT_WEIGHTS_ID, EMBEDDING_DIM, resolveModel } from './model.js'
import { encodeSft, type FeatureTensor } from './sft.js'
import { fillTileRgb, tileGrid, type TileGrid } from './tiles.js'

export interface ExtractOptions {
  imagePath: string
  outPath: string
  patch?: number
  stride?: number
  weights?: string
  batchSize?: number
}

export interface ExtractResult {
  grid: TileGrid
  tensor: FeatureTensor
}

export async function extractFeatures(opts: ExtractOptions): Promise<ExtractResult> {
  const patch = opts.patch ?? 64
  const stride = opts.stride ?? 32
  const batchSize = Math.max(1, opts.batchSize ?? 8)
  const weights = opts.weights ?? DEFAULT_WEIGHTS_ID

  const image = loadGrayImage(opts.imagePath)
  const grid = tileGrid(image.height, image.width, patch, stride)
  const model = await resolveModel(weights, patch)

  const nTiles = grid.rows * grid.cols
  const data = new Float32Array(nTiles * EMBEDDING_DIM)
  const batchBuf = new Float32Array(batchSize * patch * patch * 3)

  for (let start = 0; start < nTiles; start += batchSize) {
    const count = Math.min(batchSize, nTiles - start)
    for (let b = 0; b < count; b++) {
      const tile = start + b
      fillTileRgb(
        image,
        Math.floor(tile / grid.cols),
        tile % grid.cols,
        grid,
        batchBuf.subarray(b * patch * patch * 3, (b + 1) * patch * patch * 3),
      )
    }
    const embeddings = tf.tidy(() => {
      const input = tf.tensor4d(batchBuf.subarray(0, count * patch * patch * 3), [
        count,
        patch,
        patch,
        3,
      ])
      return model.predict(input) as tf.Tensor2D
    })
    const values = await embeddings.data()
    embeddings.dispose()
    data.set(values, start * EMBEDDING_DIM)
  }
  model.dispose()

  const tensor: FeatureTensor = {
    height: grid.rows,
    width: grid.cols,
    channels: EMBEDDING_DIM,
    channelNames: new Array<string>(EMBEDDING_DIM).fill(''),
    data,
  }
  writeFileSync(opts.outPath, encodeSft(tensor))
  return { grid, tensor }
}
