/* Optional peer dependency, loaded dynamically; typed loosely so the
 * package compiles without it installed. */
declare module "@xenova/transformers";
