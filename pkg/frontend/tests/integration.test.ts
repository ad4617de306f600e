import { execFileSync } from 'node:child_process'
import { existsSync, mkdtempSync, readFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { fileURLToPath } from 'node:url'
import { describe, expect, it } from 'vitest'
import { decodeSft } from '../dist/index.js'

const CLI_PATH = fileURLToPath(new URL('../dist/cli.js', import.meta.url))

// Cross-component acceptance: embeddings from this extractor must flow into
// the main pipeline unchanged. Needs the `sefi` CLI on PATH (pip install -e
// the repository root first).

function sefi(args: string[], cwd: string): void {
  execFileSync('sefi', args, { cwd, stdio: 'pipe' })
}

function haveSefi(): boolean {
  try {
    execFileSync('sefi', ['--help'], { stdio: 'pipe' })
    return true
  } catch {
    return false
  }
}

describe('cross-component integration', () => {
  it.skipIf(!haveSefi())(
    'extractor SFT on a 256x256 image is 7x7x512 and clusters end to end',
    async () => {
      const dir = mkdtempSync(join(tmpdir(), 'sefi-integration-'))
      sefi(
        ['synth', '--seed', '5', '--height', '256', '--width', '256', '--niches', '4',
         '--genes', '8', '--alpha', '2.0', '--out-dir', dir],
        dir,
      )

      const morphPath = join(dir, 'morph.sft')
      execFileSync(
        process.execPath,
        [CLI_PATH,
         '--image', join(dir, 'dapi.png'), '--patch', '64', '--stride', '32',
         '--weights', 'random:0', '--out', morphPath],
        { stdio: 'pipe' },
      )

      const tensor = decodeSft(readFileSync(morphPath))
      expect([tensor.height, tensor.width, tensor.channels]).toEqual([7, 7, 512])

      sefi(
        ['density', '--points', join(dir, 'points.csv'), '--height-px', '256',
         '--width-px', '256', '--out', join(dir, 'genes.sft')],
        dir,
      )
      sefi(
        ['cluster', '--genes', join(dir, 'genes.sft'), '--morph-from', morphPath,
         '--final-k', '4', '--seed', '5', '--out', join(dir, 'labels.pgm')],
        dir,
      )
      expect(existsSync(join(dir, 'labels.pgm'))).toBe(true)
      expect(existsSync(join(dir, 'labels.png'))).toBe(true)
    },
    600_000,
  )
})
