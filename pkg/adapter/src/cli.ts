#!/usr/bin/env node
/**
 * extract-features: turn videos plus burst timestamps (clusters.jsonl) into
 * features.jsonl for the analysis pipeline.
 *
 *   extract-features extract --videos dir --clusters clusters.jsonl \
 *       --out features.jsonl [--model dir]
 *   extract-features make-stub-model --out dir --seed N [--input-size 64]
 *
 * The model directory must hold a tfjs layers model whose penultimate dense
 * layer has 4096 units. A missing or unloadable model is a hard failure:
 * there is no silent fallback.
 */

import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { extractAll } from './extract.js'
import { featureExtractor, loadModel, makeStubModel, saveModel } from './model.js'

export async function run(argv: string[]): Promise<number> {
  let failed = false
  await yargs(argv)
    .scriptName('extract-features')
    .command(
      ['extract', '$0'],
      'extract burst-point frame features',
      (y) => y
        .option('videos', { type: 'string', demandOption: true, describe: 'directory of video files (<video_id>.y4m; other containers need ffmpeg on PATH)' })
        .option('clusters', { type: 'string', demandOption: true, describe: 'clusters.jsonl with burst points' })
        .option('out', { type: 'string', demandOption: true, describe: 'output features.jsonl' })
        .option('model', { type: 'string', default: process.env.FEATURE_MODEL_DIR ?? './feature-model', describe: 'tfjs layers model directory' }),
      async (args) => {
        const model = await loadModel(args.model)
        const extractor = featureExtractor(model)
        const n = await extractAll(args.videos, args.clusters, extractor, args.out)
        console.log(`wrote ${n} feature records to ${args.out}`)
      },
    )
    .command(
      'make-stub-model',
      'build a small deterministic feature network for offline use',
      (y) => y
        .option('out', { type: 'string', demandOption: true })
        .option('seed', { type: 'number', default: 0 })
        .option('input-size', { type: 'number', default: 64 }),
      async (args) => {
        const model = makeStubModel(args.seed, args['input-size'])
        await saveModel(model, args.out)
        console.log(`stub model (seed ${args.seed}) saved to ${args.out}`)
      },
    )
    .strict()
    .fail((msg, err) => {
      console.error(`extract-features: ${msg ?? err.message}`)
      failed = true
    })
    .parseAsync()
    .catch((err: Error) => {
      console.error(`extract-features: ${err.message}`)
      failed = true
    })
  return failed ? 1 : 0
}

const entry = process.argv[1] ?? ''
if (entry.endsWith('cli.js') || entry.endsWith('extract-features')) {
  run(hideBin(process.argv)).then((code) => {
    process.exitCode = code
  })
}
