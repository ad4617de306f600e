export { decodeGrayPng, decodePgm, encodePgm, loadGrayImage } from './image.js'
export type { GrayImage } from './image.js'
export { decodeSft, encodeSft, SftFormatError } from './sft.js'
export type { FeatureTensor } from './sft.js'
export { fillTileRgb, tileGrid } from './tiles.js'
export type { TileGrid } from './tiles.js'
export {
  buildResnet18,
  DEFAULT_WEIGHTS_ID,
  EMBEDDING_DIM,
  loadModelFromFile,
  resolveModel,
} from './model.js'
export { extractFeatures } from './extract.js'
export type { ExtractOptions, ExtractResult } from './extract.js'
