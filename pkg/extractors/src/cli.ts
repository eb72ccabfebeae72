#!/usr/bin/env node
/**
 * extract {images|texts|classes} --in <path> --out <file.zslf> [options]
 *
 * Emits a ZSLF embedding file plus a `<out>.json` sidecar listing skipped
 * inputs, dimensions, record count and the backend used.
 */

import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { CLASS_DIM, TEXT_DIM, VISUAL_DIM, extractClasses, extractImages, extractTexts } from './extract.js'

function report(result: { outPath: string; sidecar: { count: number; dim: number; skipped: string[] } }) {
  const { outPath, sidecar } = result
  console.log(
    `wrote ${sidecar.count} records (dim=${sidecar.dim}) to ${outPath}` +
      (sidecar.skipped.length ? `, skipped ${sidecar.skipped.length}` : ''),
  )
}

export async function main(argv: string[]): Promise<number> {
  try {
    await yargs(argv)
      .scriptName('extract')
      .command(
        'images',
        'embed every image file in a directory (4096-dim)',
        y =>
          y
            .option('in', { type: 'string', demandOption: true, describe: 'image directory' })
            .option('out', { type: 'string', demandOption: true, describe: 'output .zslf' })
            .option('dim', { type: 'number', default: VISUAL_DIM }),
        args => report(extractImages(args.in, args.out, args.dim)),
      )
      .command(
        'texts',
        'embed every text document in a directory (1024-dim)',
        y =>
          y
            .option('in', { type: 'string', demandOption: true, describe: 'document directory' })
            .option('out', { type: 'string', demandOption: true, describe: 'output .zslf' })
            .option('dim', { type: 'number', default: TEXT_DIM }),
        args => report(extractTexts(args.in, args.out, args.dim)),
      )
      .command(
        'classes',
        'embed class names from a word-vector table (300-dim)',
        y =>
          y
            .option('in', { type: 'string', demandOption: true, describe: 'class-name list file' })
            .option('out', { type: 'string', demandOption: true, describe: 'output .zslf' })
            .option('vectors', {
              type: 'string',
              demandOption: true,
              describe: 'word2vec text-format vector table',
            })
            .option('dim', { type: 'number', default: CLASS_DIM }),
        args => report(extractClasses(args.in, args.out, args.vectors, args.dim)),
      )
      .demandCommand(1)
      .strict()
      .fail((msg, err) => {
        throw err ?? new Error(msg)
      })
      .parseAsync()
    return 0
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 2
  }
}

const invokedDirectly =
  process.argv[1] && import.meta.url.endsWith(process.argv[1].split('/').pop() ?? '')
if (invokedDirectly) {
  main(hideBin(process.argv)).then(code => {
    process.exitCode = code
  })
}
